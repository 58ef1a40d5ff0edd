"""Non-binary targets and protected features, and continuous-target sweeps."""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dataset import ColumnSpec, Dataset, SfmRoles
from .decomposition import marginal_x_counts
from .effects import (
    IDENTITY_TOL,
    KINDS,
    Contrast,
    EffectLedger,
    effect_ledger,
    effect_vectors,
    resolve_kinds,
)
from .errors import ConfigError, IdentityError
from .estimator import DEFAULT_CAP, SfmEstimator

ADDITIVE_KINDS = ("tv", "te", "se")


@dataclass(frozen=True)
class UtilitySpec:
    """A real score per state of Y; ``None`` means identity on numeric states."""

    values: Mapping[Any, float] | None = None

    def vector(self, est: SfmEstimator) -> np.ndarray:
        states = est.states(est.roles.y)
        if self.values is None:
            try:
                vec = np.array([float(s) for s in states])
            except (TypeError, ValueError):
                raise ConfigError("identity utility needs numeric Y states; pass explicit values") from None
        else:
            vec = np.empty(len(states))
            for i, s in enumerate(states):
                if s in self.values:
                    vec[i] = float(self.values[s])
                elif str(s) in {str(k) for k in self.values}:
                    vec[i] = float(next(v for k, v in self.values.items() if str(k) == str(s)))
                else:
                    raise ConfigError(f"utility is not defined for Y state {s!r}")
        if not np.all(np.isfinite(vec)):
            raise ConfigError("utility values must be finite")
        return vec


def per_state_effects(est: SfmEstimator, x0: Any, x1: Any, kind: str) -> dict[Any, float]:
    """Effect of the given kind for every state of Y (these sum to zero)."""
    (kind,) = resolve_kinds([kind])
    vec = effect_vectors(est, x0, x1)[kind]
    return {s: float(v) for s, v in zip(est.states(est.roles.y), vec)}


def expected_effect(est: SfmEstimator, x0: Any, x1: Any, kind: str, u: UtilitySpec | None = None) -> float:
    """sum_y u(y) * effect(y): the effect on E[u(Y)]."""
    (kind,) = resolve_kinds([kind])
    vec = effect_vectors(est, x0, x1)[kind]
    return float(np.dot((u or UtilitySpec()).vector(est), vec))


# ---------------------------------------------------------------------------
# group averages


@dataclass
class GroupAverage:
    kind: str
    weighting: str
    value: float
    pairs: list[dict[str, Any]]

    @property
    def mixed_signs(self) -> bool:
        signs = {np.sign(p["value"]) for p in self.pairs if p["value"] != 0}
        return len(signs) > 1


def pair_weights(est: SfmEstimator, x0s: Sequence[Any], x1s: Sequence[Any], weighting: str) -> list[float]:
    n_pairs = len(x0s) * len(x1s)
    if weighting == "arithmetic":
        return [1.0 / n_pairs] * n_pairs
    if weighting not in ("marginal", "marginal-weighted"):
        raise ConfigError("weighting must be 'arithmetic' or 'marginal-weighted'")
    counts = marginal_x_counts(est)
    states = est.states(est.roles.x)

    def n(label: Any) -> float:
        return counts[states[est.state_index(est.roles.x, label)]]

    n0 = sum(n(a) for a in x0s)
    n1 = sum(n(b) for b in x1s)
    if n0 <= 0 or n1 <= 0:
        raise ConfigError("a protected group has no rows; use arithmetic weighting")
    return [n(a) / n0 * n(b) / n1 for a, b in itertools.product(x0s, x1s)]


def group_average_effect(
    est: SfmEstimator,
    x0s: Sequence[Any],
    x1s: Sequence[Any],
    kind: str,
    weighting: str = "arithmetic",
    y: Any = None,
    u: UtilitySpec | None = None,
) -> GroupAverage:
    """Average a pairwise effect over all (x0, x1) in x0s x x1s.

    The target is the indicator of ``y`` when given, otherwise the utility
    ``u`` (identity on numeric Y by default).
    """
    (kind,) = resolve_kinds([kind])
    if not x0s or not x1s:
        raise ConfigError("protected groups must be non-empty")
    if {str(s) for s in x0s} & {str(s) for s in x1s}:
        raise ConfigError("protected groups must be disjoint")
    u_vec = _target_weights(est, y, u)
    weights = pair_weights(est, x0s, x1s, weighting)
    pairs = []
    total = 0.0
    for (a, b), wgt in zip(itertools.product(x0s, x1s), weights):
        val = float(np.dot(u_vec, effect_vectors(est, a, b)[kind]))
        pairs.append({"x0": a, "x1": b, "value": val, "weight": wgt})
        total += wgt * val
    return GroupAverage(kind, weighting, total, pairs)


def _target_weights(est: SfmEstimator, y: Any, u: UtilitySpec | None) -> np.ndarray:
    if y is not None:
        vec = np.zeros(len(est.states(est.roles.y)))
        vec[est.state_index(est.roles.y, y)] = 1.0
        return vec
    return (u or UtilitySpec()).vector(est)


def group_average_vectors(
    est: SfmEstimator, x0s: Sequence[Any], x1s: Sequence[Any], weighting: str = "arithmetic"
) -> dict[str, np.ndarray]:
    """Weighted average of every descriptor vector over the pairs."""
    weights = pair_weights(est, x0s, x1s, weighting)
    out = {k: np.zeros(len(est.states(est.roles.y))) for k in KINDS}
    for (a, b), wgt in zip(itertools.product(x0s, x1s), weights):
        for k, v in effect_vectors(est, a, b).items():
            out[k] = out[k] + wgt * v
    return out


# ---------------------------------------------------------------------------
# stepwise


@dataclass
class StepwiseDecomposition:
    ordered_states: tuple[Any, ...]
    steps: list[dict[str, Any]]
    endpoint: dict[str, float]
    residuals: dict[str, float]
    non_additive: tuple[str, ...] = ("de", "ie", "ie_rev")

    def cumulative(self, kind: str = "te") -> list[float]:
        return list(itertools.accumulate(s[kind] for s in self.steps))


def stepwise_decompose(
    est: SfmEstimator,
    ordered_states: Sequence[Any],
    y: Any,
    kinds: Sequence[str] = ("tv", "te", "se", "de", "ie_rev"),
) -> StepwiseDecomposition:
    """Effects between adjacent levels of an ordered protected feature.

    TV, TE and SE steps telescope to the first-to-last effect; DE and IE steps
    are reported but do not add up in general.
    """
    kinds = resolve_kinds(kinds)
    if len(ordered_states) < 2:
        raise ConfigError("stepwise decomposition needs at least two ordered states")
    counts = marginal_x_counts(est)
    states = est.states(est.roles.x)
    steps = []
    for a, b in zip(ordered_states, ordered_states[1:]):
        led = effect_ledger(est, Contrast(a, b, y))
        vals = led.values()
        step: dict[str, Any] = {"from": a, "to": b}
        step.update({k: vals[k] for k in kinds})
        step["n_rows"] = counts[states[est.state_index(est.roles.x, a)]] + counts[states[est.state_index(est.roles.x, b)]]
        steps.append(step)
    end = effect_ledger(est, Contrast(ordered_states[0], ordered_states[-1], y)).values()
    endpoint = {k: end[k] for k in kinds}
    residuals = {}
    for k in kinds:
        residuals[k] = abs(sum(s[k] for s in steps) - endpoint[k])
        if k in ADDITIVE_KINDS and residuals[k] > IDENTITY_TOL:
            raise IdentityError(f"stepwise {k} does not telescope (residual {residuals[k]:.3e})")
    return StepwiseDecomposition(
        tuple(ordered_states), steps, endpoint, residuals, tuple(k for k in kinds if k not in ADDITIVE_KINDS)
    )


# ---------------------------------------------------------------------------
# threshold sweep


CURVE_KINDS = ("tv", "te", "de", "ie", "se")


@dataclass
class ThresholdCurve:
    """Effects of a binarised numeric target as a function of the cut point.

    ``values["ie"]`` holds IE_{x1,x0}, the indirect term for which te = de - ie.
    """

    grid: list[float]
    values: dict[str, list[float]]
    x0: Any
    x1: Any
    strict: bool
    selected_threshold: float | None = None
    argmax: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ConfigError("threshold grid must be strictly ascending")
        if not self.argmax:
            self.argmax = {k: self.grid[int(np.argmax(v))] for k, v in self.values.items() if v}

    def rows(self) -> list[dict[str, float]]:
        return [
            {"threshold": t, **{k: self.values[k][i] for k in self.values}} for i, t in enumerate(self.grid)
        ]


def binarize(d: Dataset, column: str, threshold: float, strict: bool = True) -> Dataset:
    """Replace a numeric column by the indicator ``value > t`` (``>=`` if not strict).

    The new column declares only the indicator values actually present, so a
    constant indicator carries no effect at all.
    """
    col = d.column(column)
    if not col.numeric:
        raise ConfigError(f"cannot binarize non-numeric column {column!r}")
    values = np.asarray(col.states, dtype=float)[d.codes_of(column)]
    flags = (values > threshold) if strict else (values >= threshold)
    present = tuple(int(v) for v in np.unique(flags.astype(int)))
    codes = np.searchsorted(np.asarray(present), flags.astype(int))
    return d.with_column(ColumnSpec(column, "integer", present), codes)


def threshold_sweep(
    d: Dataset,
    r: SfmRoles,
    grid: Sequence[float] | None = None,
    kinds: Sequence[str] = CURVE_KINDS,
    alpha: float = 1.0,
    strict: bool = True,
    x0: Any = None,
    x1: Any = None,
    selected_threshold: float | None = None,
    cap: int = DEFAULT_CAP,
) -> ThresholdCurve:
    """Binarise Y at every threshold in ``grid`` and evaluate the effects at Y = 1.

    The default grid is the sorted set of observed Y values. The contrast
    defaults to the first state of each protected group.
    """
    col = d.column(r.y)
    if not col.numeric:
        raise ConfigError(f"threshold sweep needs a numeric target, {r.y!r} is {col.kind}")
    for k in kinds:
        if k not in CURVE_KINDS:
            raise ConfigError(f"unknown curve kind {k!r}")
    if grid is None:
        grid = sorted({float(v) for v in np.asarray(col.states, dtype=float)[np.unique(d.codes_of(r.y))]})
    grid = [float(t) for t in grid]
    if not grid:
        raise ConfigError("threshold grid is empty")
    x0 = r.x0_states[0] if x0 is None else x0
    x1 = r.x1_states[0] if x1 is None else x1
    values: dict[str, list[float]] = {k: [] for k in kinds}
    for t in grid:
        ledger = _binary_ledger(binarize(d, r.y, t, strict), r, alpha, x0, x1, cap)
        vals = {"tv": ledger.tv, "te": ledger.te, "de": ledger.de, "ie": ledger.ie_reversed, "se": ledger.se}
        for k in kinds:
            values[k].append(vals[k])
    return ThresholdCurve(grid, values, x0, x1, strict, selected_threshold)


def _binary_ledger(d: Dataset, r: SfmRoles, alpha: float, x0: Any, x1: Any, cap: int) -> EffectLedger:
    roles = SfmRoles(r.x, r.y, r.z, r.w, r.x0_states, r.x1_states, 1)
    est = SfmEstimator.fit(d, SfmRoles(r.x, r.y, r.z, r.w, r.x0_states, r.x1_states, None), alpha, cap)
    if len(d.states(r.y)) < 2:
        zero = EffectLedger(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, Contrast(x0, x1, 1))
        zero.metadata = {"n_rows": d.n_rows, "alpha": alpha, "roles_digest": roles.digest()}
        return zero
    return effect_ledger(est, Contrast(x0, x1, 1))


def is_close(a: float, b: float, tol: float = 1e-12) -> bool:
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
