from __future__ import annotations

import json
import threading

import numpy as np
import pytest

from causalfair.dataset import ColumnSpec, Dataset, SfmRoles
from causalfair.errors import CardinalityError, ConfigError, UnidentifiableCellError
from causalfair.estimator import SfmEstimator

from .conftest import random_dataset


def test_toy_smoothed_conditionals(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles, alpha=1.0)
    assert est.conditional(["y"], {"x": "a"})[1] == pytest.approx(0.5, abs=1e-15)
    assert est.conditional(["y"], {"x": "b"})[1] == pytest.approx(0.75, abs=1e-15)


def test_alpha_zero_is_ml(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles, alpha=0.0)
    assert est.conditional(["y"], {"x": "b"}).tolist() == [0.0, 1.0]
    assert est.conditional(["y"]).tolist() == [0.25, 0.75]


def test_empty_conditioning_is_marginal(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles)
    py = est.conditional(["y"])
    assert py.sum() == pytest.approx(1.0, abs=1e-12)
    px = est.marginal(["x"])
    assert np.allclose(py, sum(px[i] * est.conditional(["y"], {"x": s}) for i, s in enumerate(est.states("x"))))


def test_zero_row_cell_uniform():
    cols = (ColumnSpec("x", "categorical", ("a", "b", "c")), ColumnSpec("y", "integer", (0, 1)))
    d = Dataset(cols, np.array([[0, 0], [1, 1]]))
    r = SfmRoles("x", "y", (), (), ("a",), ("b",), 1)
    est = SfmEstimator.fit(d, r, alpha=1.0)
    assert est.conditional(["y"], {"x": "c"}).tolist() == [0.5, 0.5]
    with pytest.raises(UnidentifiableCellError):
        SfmEstimator.fit(d, r, alpha=0.0).conditional(["y"], {"x": "c"})


def test_negative_alpha(toy, toy_roles):
    with pytest.raises(ConfigError):
        SfmEstimator.fit(toy, toy_roles, alpha=-1)


def test_unknown_state(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles)
    with pytest.raises(ConfigError):
        est.conditional(["y"], {"x": "nope"})
    with pytest.raises(ConfigError):
        est.cond_tensor(["y"], ["y"])


def test_normalization_and_positivity():
    d, r = random_dataset(5, 2, 2, n=80)
    est = SfmEstimator.fit(d, r, alpha=1.0)
    t = est.table(["w0", "w1"], ["z0", "z1", "x"])
    assert np.allclose(t.probs.sum(axis=-1), 1.0, atol=1e-12)
    assert (t.probs > 0).all()
    assert t.probs.shape[-1] == len(d.states("w0")) * len(d.states("w1"))


def test_total_probability_consistency():
    d, r = random_dataset(6, 2, 1, n=120)
    est = SfmEstimator.fit(d, r, alpha=1.0)
    cond = est.cond_tensor(["y"], ["z0", "z1", "x", "w0"])
    given = est.marginal(["z0", "z1", "x", "w0"])
    total = (cond * given[..., None]).sum(axis=(0, 1, 2, 3))
    assert np.allclose(total, est.marginal(["y"]), atol=1e-12)


def test_network_table_equals_smoothed_count():
    d, r = random_dataset(7, 1, 1, n=60)
    alpha = 0.7
    est = SfmEstimator.fit(d, r, alpha=alpha)
    counts = est.cell_counts(["z0", "x", "w0", "y"])
    expect = (counts + alpha) / (counts.sum(axis=-1, keepdims=True) + alpha * counts.shape[-1])
    assert np.allclose(est.cond_tensor(["y"], ["z0", "x", "w0"]), expect, atol=1e-13)


def test_smoothing_limits():
    d, r = random_dataset(8, 1, 0, n=60)
    big = SfmEstimator.fit(d, r, alpha=1e9).conditional(["y"], {"x": 0, "z0": 0})
    assert np.allclose(big, 0.5, atol=1e-6)
    ml = SfmEstimator.fit(d, r, alpha=0).conditional(["y"], {"x": 0, "z0": 0})
    tiny = SfmEstimator.fit(d, r, alpha=1e-9).conditional(["y"], {"x": 0, "z0": 0})
    assert np.allclose(ml, tiny, atol=1e-6)


def test_joint_iterator():
    d, r = random_dataset(1, 1, 1, n=30)
    est = SfmEstimator.fit(d, r)
    cells = list(est.joint_iterator(["z0", "w0"]))
    assert len(cells) == len(d.states("z0")) * len(d.states("w0"))
    assert cells == sorted(cells)
    assert list(est.joint_iterator([])) == [()]
    with pytest.raises(CardinalityError):
        est.joint_iterator(["z0", "w0"], cap=1)


def test_fit_cap():
    d, r = random_dataset(1, 2, 2, n=30)
    with pytest.raises(CardinalityError):
        SfmEstimator.fit(d, r, cap=10)


def test_dump_table(toy, toy_roles):
    est = SfmEstimator.fit(toy, toy_roles)
    blob = json.loads(est.dump_table(["y"], ["x"]))
    assert blob["targets"] == ["y"] and blob["given"] == ["x"]
    assert blob["rows"][1] == {"given_state": ["b"], "probs": [0.25, 0.75]}


def test_cache_identity_and_threads():
    d, r = random_dataset(2, 2, 2, n=200)
    est = SfmEstimator.fit(d, r)
    results = []

    def work():
        results.append(est.cond_tensor(["y"], ["z0", "x"]))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(res is results[0] for res in results)
    assert est.cond_tensor(["y"], ["z0", "x"]) is results[0]


def test_from_distribution_reorders():
    cols = [ColumnSpec("y", "integer", (0, 1)), ColumnSpec("x", "integer", (0, 1)), ColumnSpec("extra", "integer", (0, 1))]
    joint = np.arange(1, 9, dtype=float).reshape(2, 2, 2)
    joint /= joint.sum()
    est = SfmEstimator.from_distribution(cols, SfmRoles("x", "y", (), (), (0,), (1,)), joint)
    pxy = joint.sum(axis=2).T
    assert np.allclose(est.joint(), pxy)
    assert est.alpha == 0


def test_zero_count_cells():
    cols = (ColumnSpec("x", "categorical", ("a", "b", "c")), ColumnSpec("y", "integer", (0, 1)))
    est = SfmEstimator.fit(Dataset(cols, np.array([[0, 0], [1, 1]])), SfmRoles("x", "y", (), (), ("a",), ("b",)))
    assert est.zero_count_cells == 1
