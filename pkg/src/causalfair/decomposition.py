"""Per-mediator and per-confounder attribution, ordering diagnostics and slices."""

from __future__ import annotations

import itertools
import math
import random
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .effects import (
    IDENTITY_TOL,
    Contrast,
    EffectLedger,
    _contract,
    _safe_weight,
    effect_ledger,
    effect_terms,
    y_indicator,
)
from .errors import ConfigError, IdentityError
from .estimator import SfmEstimator

MAX_EXHAUSTIVE_ORDERINGS = 5040
SAMPLED_ORDERINGS = 100
ORDER_DEPENDENCE_TOL = 1e-6


@dataclass
class MediatorDecomposition:
    order: tuple[str, ...]
    components: dict[str, float]
    total_ie: float
    residual: float


@dataclass
class ConfounderDecomposition:
    order: tuple[str, ...]
    components: dict[str, float]
    total_se: float
    residual: float


def _check_permutation(order: Sequence[str] | None, names: Sequence[str], what: str) -> tuple[str, ...]:
    if order is None:
        return tuple(names)
    order = tuple(order)
    if sorted(order) != sorted(names) or len(set(order)) != len(order):
        raise ConfigError(f"{what} order {order} is not a permutation of {tuple(names)}")
    return order


def _x(est: SfmEstimator, label: Any) -> int:
    return est.state_index(est.roles.x, label)


# ---------------------------------------------------------------------------
# mediators


def _chain_factors(est: SfmEstimator, order: tuple[str, ...], x: int) -> list[np.ndarray]:
    """P(w^j | x, z, w^{<j}) for each position j of ``order``.

    Each factor has axes Z + W(order) with trailing W axes kept as size 1, so
    the factors broadcast against each other.
    """
    terms = effect_terms(est)
    kz = terms.kz
    perm = list(range(kz)) + [kz + terms.w.index(n) for n in order]
    pw = np.transpose(np.take(terms.w_given_xz, x, axis=kz), perm)
    k = len(order)
    factors = []
    prev = None
    for j in range(1, k + 1):
        m = pw.sum(axis=tuple(range(kz + j, kz + k)), keepdims=True) if j < k else pw
        if prev is None:
            factors.append(m)
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                factors.append(np.where(prev > 0, m / np.where(prev > 0, prev, 1), np.nan))
        prev = m
    return factors


def _mediator_terms(est: SfmEstimator, c_x0: int, c_x1: int, order: tuple[str, ...]) -> list[np.ndarray]:
    """P(y_{x0, (W<=i)_{x1}, (W>i)_{x0}}) for i = 0..k, as vectors over Y."""
    terms = effect_terms(est)
    kz = terms.kz
    f1 = _chain_factors(est, order, c_x1)
    f0 = _chain_factors(est, order, c_x0)
    perm = list(range(kz)) + [kz + terms.w.index(n) for n in order] + [kz + len(order)]
    py = np.transpose(np.take(terms.y_given_xzw, c_x0, axis=kz), perm)
    pz = terms.pz.reshape(terms.pz.shape + (1,) * len(order))
    out = []
    for i in range(len(order) + 1):
        weight = pz
        for f in f1[:i] + f0[i:]:
            weight = _safe_weight(weight, f)
        out.append(_contract(py, weight[..., None]))
    return out


def mediator_term(est: SfmEstimator, c: Contrast, order: Sequence[str], i: int) -> float:
    """The nested quantity P(y_{x0,(W<=i)_{x1},(W>i)_{x0}}) identified in product form."""
    order = _check_permutation(order, est.roles.w, "mediator")
    vec = _mediator_terms(est, _x(est, c.x0), _x(est, c.x1), order)[i]
    return float(np.dot(y_indicator(est, c.y), vec))


def ie_components(
    est: SfmEstimator, x0: Any, x1: Any, order: tuple[str, ...]
) -> dict[str, np.ndarray]:
    """Per-mediator IE components as vectors over Y (telescoping differences)."""
    t = _mediator_terms(est, _x(est, x0), _x(est, x1), order)
    return {name: t[i + 1] - t[i] for i, name in enumerate(order)}


def ie_by_mediator(
    est: SfmEstimator, c: Contrast, order: Sequence[str] | None = None, y_weights: np.ndarray | None = None
) -> MediatorDecomposition:
    """Split IE_{x0,x1}(y) into one component per mediator, in the given order.

    Pass the reversed contrast to decompose IE_{x1,x0}, the term that enters
    ``te = de - ie_reversed``.
    """
    order = _check_permutation(order, est.roles.w, "mediator")
    u = y_indicator(est, c.y) if y_weights is None else y_weights
    comps = {n: float(np.dot(u, v)) for n, v in ie_components(est, c.x0, c.x1, order).items()}
    total = float(np.dot(u, effect_terms(est).vectors(_x(est, c.x0), _x(est, c.x1))["ie"]))
    residual = abs(sum(comps.values()) - total) if order else abs(total)
    if residual > IDENTITY_TOL:
        raise IdentityError(f"mediator components do not sum to IE (residual {residual:.3e})")
    return MediatorDecomposition(order, comps, total, residual)


# ---------------------------------------------------------------------------
# confounders


def _confounder_levels(est: SfmEstimator, x: int, order: tuple[str, ...]) -> list[np.ndarray]:
    """sum_{z<=i} P(y | x, z<=i) P(z<=i) for i = 0..k, as vectors over Y."""
    r = est.roles
    out = []
    for i in range(len(order) + 1):
        prefix = list(order[:i])
        py = np.take(est.cond_tensor([r.y], [*prefix, r.x]), x, axis=i)
        pz = est.marginal(prefix) if prefix else np.ones(())
        out.append(_contract(py, pz[..., None]))
    return out


def se_components(est: SfmEstimator, x0: Any, x1: Any, order: tuple[str, ...]) -> dict[str, np.ndarray]:
    a1 = _confounder_levels(est, _x(est, x1), order)
    a0 = _confounder_levels(est, _x(est, x0), order)
    return {name: a1[i] - a1[i + 1] - a0[i] + a0[i + 1] for i, name in enumerate(order)}


def se_by_confounder(
    est: SfmEstimator, c: Contrast, order: Sequence[str] | None = None, y_weights: np.ndarray | None = None
) -> ConfounderDecomposition:
    """Split SE(y) into one component per confounder, conditioning on growing prefixes."""
    order = _check_permutation(order, est.roles.z, "confounder")
    u = y_indicator(est, c.y) if y_weights is None else y_weights
    comps = {n: float(np.dot(u, v)) for n, v in se_components(est, c.x0, c.x1, order).items()}
    total = float(np.dot(u, effect_terms(est).vectors(_x(est, c.x0), _x(est, c.x1))["se"]))
    residual = abs(sum(comps.values()) - total) if order else abs(total)
    if residual > IDENTITY_TOL:
        raise IdentityError(f"confounder components do not sum to SE (residual {residual:.3e})")
    return ConfounderDecomposition(order, comps, total, residual)


# ---------------------------------------------------------------------------
# ordering sensitivity


@dataclass
class OrderingReport:
    kind: str
    orderings: list[tuple[str, ...]]
    exhaustive: bool
    components: dict[str, list[float]]
    spread: dict[str, float]
    tolerance: float = ORDER_DEPENDENCE_TOL

    @property
    def max_spread(self) -> float:
        return max(self.spread.values(), default=0.0)

    @property
    def order_dependent(self) -> bool:
        return self.max_spread > self.tolerance


def _orderings(names: tuple[str, ...], seed: int) -> tuple[list[tuple[str, ...]], bool]:
    if math.factorial(len(names)) <= MAX_EXHAUSTIVE_ORDERINGS:
        return list(itertools.permutations(names)), True
    rng = random.Random(seed)
    picks = {names}
    while len(picks) < SAMPLED_ORDERINGS:
        perm = list(names)
        rng.shuffle(perm)
        picks.add(tuple(perm))
    return sorted(picks), False


def ordering_sensitivity(
    est: SfmEstimator, c: Contrast, kind: str = "mediator", seed: int = 0, tol: float = ORDER_DEPENDENCE_TOL
) -> OrderingReport:
    """Evaluate the decomposition under every ordering and report per-component spread.

    Up to 7 variables every permutation is tried; beyond that a seeded sample
    of orderings is used.
    """
    if kind == "mediator":
        names, decompose = tuple(est.roles.w), ie_by_mediator
    elif kind == "confounder":
        names, decompose = tuple(est.roles.z), se_by_confounder
    else:
        raise ConfigError("kind must be 'mediator' or 'confounder'")
    orderings, exhaustive = _orderings(names, seed)
    values: dict[str, list[float]] = {n: [] for n in names}
    for order in orderings:
        for n, v in decompose(est, c, order).components.items():
            values[n].append(v)
    spread = {n: (max(v) - min(v)) if v else 0.0 for n, v in values.items()}
    return OrderingReport(kind, orderings, exhaustive, values, spread, tol)


# ---------------------------------------------------------------------------
# slices


@dataclass
class ZSpecificEffect:
    z_state: dict[str, Any]
    te: float | None
    de: float | None
    ie: float | None
    ie_reversed: float | None
    p_z: float
    n_rows: float


def _finite(v: float) -> float | None:
    return None if not np.isfinite(v) else float(v)


def z_specific_effects(est: SfmEstimator, c: Contrast, y_weights: np.ndarray | None = None) -> list[ZSpecificEffect]:
    """Effects conditional on each joint confounder state, in lexicographic order.

    Weighting the slices by P(z) and summing recovers the aggregate TE, DE and IE.
    """
    terms = effect_terms(est)
    r = est.roles
    kz = terms.kz
    list(est.joint_iterator(r.z))  # cap check
    u = y_indicator(est, c.y) if y_weights is None else y_weights
    x0, x1 = _x(est, c.x0), _x(est, c.x1)

    def at(t: np.ndarray, x: int) -> np.ndarray:
        return np.take(t, x, axis=kz)

    w_axes = tuple(range(kz, kz + len(terms.w)))
    py0, py1 = at(terms.y_given_xzw, x0), at(terms.y_given_xzw, x1)
    pw0, pw1 = at(terms.w_given_xz, x0)[..., None], at(terms.w_given_xz, x1)[..., None]
    with np.errstate(invalid="ignore"):
        te = (at(terms.y_given_xz, x1) - at(terms.y_given_xz, x0)) @ u
        de = ((py1 - py0) * pw0).sum(axis=w_axes) @ u
        ie = (py0 * (pw1 - pw0)).sum(axis=w_axes) @ u
        ie_rev = (py1 * (pw0 - pw1)).sum(axis=w_axes) @ u
    counts = est.cell_counts(r.z) if r.z else np.asarray(est.counts.sum())
    out = []
    for idx in itertools.product(*(range(est.cards[a]) for a in range(kz))):
        out.append(
            ZSpecificEffect(
                z_state={n: est.states(n)[i] for n, i in zip(r.z, idx)},
                te=_finite(te[idx]),
                de=_finite(de[idx]),
                ie=_finite(ie[idx]),
                ie_reversed=_finite(ie_rev[idx]),
                p_z=float(terms.pz[idx]),
                n_rows=float(counts[idx]),
            )
        )
    return out


@dataclass
class PairwiseEffect:
    x0: Any
    x1: Any
    ledger: EffectLedger
    n_x0: float
    n_x1: float


def marginal_x_counts(est: SfmEstimator) -> dict[Any, float]:
    counts = est.cell_counts([est.roles.x])
    return {s: float(n) for s, n in zip(est.states(est.roles.x), counts)}


def x_pairwise_effects(
    est: SfmEstimator, y: Any, x0s: Sequence[Any], x1s: Sequence[Any]
) -> list[PairwiseEffect]:
    """One ledger per (x0, x1) in x0s x x1s, with the marginal counts of each state."""
    if not x0s or not x1s:
        raise ConfigError("both state sets must be non-empty")
    if {str(s) for s in x0s} & {str(s) for s in x1s}:
        raise ConfigError("state sets must be disjoint")
    counts = marginal_x_counts(est)
    states = est.states(est.roles.x)
    out = []
    for a, b in itertools.product(x0s, x1s):
        ledger = effect_ledger(est, Contrast(a, b, y))
        na = counts[states[_x(est, a)]]
        nb = counts[states[_x(est, b)]]
        out.append(PairwiseEffect(a, b, ledger, na, nb))
    return out
