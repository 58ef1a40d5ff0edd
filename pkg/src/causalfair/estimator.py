"""Laplace-smoothed discrete distributions over the SFM role variables.

The estimator is a Bayesian network over the role columns in the order
``Z1..Zk, X, W1..Wm, Y``. Each node's table is conditioned on every earlier
node (so the network is agnostic to structure inside the Z and W clusters) and
smoothed with ``alpha`` pseudo-counts per child state. Every query is answered
from the single joint distribution this network defines, which keeps all
queries mutually consistent: sums over the estimator's own tables obey the law
of total probability exactly, and the decomposition identities hold to
floating-point rounding.

For a table of the network itself (e.g. ``P(y | x, z, w)``) the answer is the
familiar smoothed count ``(n(y, pa) + alpha) / (n(pa) + alpha * |Y|)``.
"""

from __future__ import annotations

import itertools
import json
import threading
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from .dataset import ColumnSpec, Dataset, SfmRoles, State, state_index, validate_roles
from .errors import CardinalityError, ConfigError, UnidentifiableCellError

DEFAULT_CAP = 10**7


@dataclass(frozen=True)
class ConditionalTable:
    """``probs[g1, ..., gm, t]``: distribution over flattened target joint states."""

    target_vars: tuple[str, ...]
    given_vars: tuple[str, ...]
    target_states: tuple[tuple[State, ...], ...]
    given_states: tuple[tuple[State, ...], ...]
    probs: np.ndarray
    alpha: float

    def to_json(self) -> dict[str, Any]:
        rows = []
        flat = self.probs.reshape(-1, self.probs.shape[-1])
        for given, p in zip(itertools.product(*self.given_states), flat):
            rows.append({"given_state": list(given), "probs": [float(v) for v in p]})
        return {
            "targets": list(self.target_vars),
            "given": list(self.given_vars),
            "target_states": [list(t) for t in itertools.product(*self.target_states)],
            "rows": rows,
        }


class SfmEstimator:
    """Smoothed SFM-topology network fitted to a dataset (or to an exact joint).

    Build with :meth:`fit` or :meth:`from_distribution`; the constructor is
    internal. Tables are computed lazily and cached; the cache is guarded by a
    lock so concurrent queries are safe.
    """

    def __init__(
        self,
        roles: SfmRoles,
        columns: Sequence[ColumnSpec],
        counts: np.ndarray,
        alpha: float,
        dataset: Dataset | None = None,
        cap: int = DEFAULT_CAP,
    ):
        self.roles = roles
        self.columns = tuple(columns)
        self.variables = tuple(c.name for c in self.columns)
        self.cards = tuple(len(c.states) for c in self.columns)
        self.counts = counts
        self.counts.setflags(write=False)
        self.alpha = float(alpha)
        self.dataset = dataset
        self.cap = cap
        self._cache: dict[Any, np.ndarray] = {}
        self._lock = threading.Lock()

    # ------------------------------------------------------------------ build

    @classmethod
    def fit(cls, d: Dataset, r: SfmRoles, alpha: float = 1.0, cap: int = DEFAULT_CAP) -> SfmEstimator:
        if alpha < 0:
            raise ConfigError("alpha must be non-negative")
        report = validate_roles(d, r)
        if report.missing_columns:
            raise ConfigError(f"roles reference missing columns {report.missing_columns}")
        if report.unknown_states:
            raise ConfigError(f"roles reference unknown states {report.unknown_states}")
        columns = [d.column(n) for n in r.variables]
        cards = [len(c.states) for c in columns]
        size = _checked_size(cards, cap)
        flat = np.ravel_multi_index(tuple(d.codes_of(n) for n in r.variables), cards)
        counts = np.bincount(flat, minlength=size).astype(float).reshape(cards)
        return cls(r, columns, counts, alpha, dataset=d, cap=cap)

    @classmethod
    def from_distribution(
        cls,
        columns: Sequence[ColumnSpec],
        roles: SfmRoles,
        joint: np.ndarray,
        cap: int = DEFAULT_CAP,
    ) -> SfmEstimator:
        """Treat an exact joint distribution as an infinite dataset (alpha = 0).

        ``columns`` and the axes of ``joint`` may be in any order; they are
        rearranged into the SFM order.
        """
        names = [c.name for c in columns]
        by_name = {c.name: c for c in columns}
        try:
            perm = [names.index(n) for n in roles.variables]
        except ValueError as exc:
            raise ConfigError(f"joint distribution lacks a role variable: {exc}") from None
        extra = [i for i in range(len(names)) if i not in perm]
        probs = np.asarray(joint, dtype=float)
        if extra:
            probs = probs.sum(axis=tuple(extra))
            kept = [i for i in range(len(names)) if i not in extra]
            perm = [kept.index(p) for p in perm]
        probs = np.transpose(probs, perm)
        _checked_size(probs.shape, cap)
        return cls(roles, [by_name[n] for n in roles.variables], probs.copy(), 0.0, cap=cap)

    # ------------------------------------------------------------------ basics

    @property
    def n_rows(self) -> int | None:
        return self.dataset.n_rows if self.dataset is not None else None

    def axis(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise ConfigError(f"unknown column {name!r}") from None

    def column(self, name: str) -> ColumnSpec:
        return self.columns[self.axis(name)]

    def states(self, name: str) -> tuple[State, ...]:
        return self.column(name).states  # type: ignore[return-value]

    def state_index(self, name: str, label: Any) -> int:
        return state_index(self.column(name), label)

    @property
    def z_axes(self) -> tuple[int, ...]:
        return tuple(range(len(self.roles.z)))

    @property
    def x_axis(self) -> int:
        return len(self.roles.z)

    @property
    def w_axes(self) -> tuple[int, ...]:
        return tuple(range(self.x_axis + 1, self.x_axis + 1 + len(self.roles.w)))

    @property
    def y_axis(self) -> int:
        return len(self.variables) - 1

    def _cached(self, key: Any, build) -> np.ndarray:
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = build()
        value.setflags(write=False)
        with self._lock:
            return self._cache.setdefault(key, value)

    # ------------------------------------------------------------------ tables

    def cpt(self, name: str) -> np.ndarray:
        """Network table of ``name`` given all earlier variables, shape ``cards[:i+1]``.

        Rows whose parent configuration was never observed are uniform when
        alpha > 0 and NaN when alpha == 0.
        """
        i = self.axis(name)

        def build() -> np.ndarray:
            margin = self.counts.sum(axis=tuple(range(i + 1, len(self.cards))))
            denom = margin.sum(axis=-1, keepdims=True) + self.alpha * self.cards[i]
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(denom > 0, (margin + self.alpha) / np.where(denom > 0, denom, 1), np.nan)

        return self._cached(("cpt", i), build)

    @property
    def zero_count_cells(self) -> int:
        """Number of network-table rows (parent configurations) with no data."""
        total = 0
        for i in range(len(self.cards)):
            margin = self.counts.sum(axis=tuple(range(i, len(self.cards))))
            total += int(np.count_nonzero(margin == 0))
        return total

    def joint(self) -> np.ndarray:
        """Full joint distribution over the role variables, SFM axis order."""

        def build() -> np.ndarray:
            if self.alpha == 0:
                total = self.counts.sum()
                if total <= 0:
                    raise UnidentifiableCellError("no data")
                return self.counts / total
            out = np.ones(())
            for i, name in enumerate(self.variables):
                out = out[..., None] * self.cpt(name)
            return out

        return self._cached("joint", build)

    def marginal(self, names: Sequence[str]) -> np.ndarray:
        """Joint marginal over ``names``, axes in the order given."""
        names = tuple(names)
        axes = [self.axis(n) for n in names]
        if len(set(axes)) != len(axes):
            raise ConfigError(f"repeated variable in {names}")

        def build() -> np.ndarray:
            drop = tuple(a for a in range(len(self.cards)) if a not in axes)
            m = self.joint().sum(axis=drop)
            kept = sorted(axes)
            return np.transpose(m, [kept.index(a) for a in axes])

        return self._cached(("marginal", names), build)

    def cond_tensor(self, targets: Sequence[str], given: Sequence[str]) -> np.ndarray:
        """``P(targets | given)`` as a tensor with axes ``given + targets``.

        Entries whose conditioning event has zero probability are NaN (only
        possible with alpha == 0).
        """
        targets, given = tuple(targets), tuple(given)
        if set(targets) & set(given):
            raise ConfigError("targets and given must be disjoint")

        def build() -> np.ndarray:
            num = self.marginal(given + targets)
            den = self.marginal(given) if given else np.asarray(num.sum())
            den = den.reshape(den.shape + (1,) * len(targets))
            with np.errstate(invalid="ignore", divide="ignore"):
                return np.where(den > 0, num / np.where(den > 0, den, 1), np.nan)

        return self._cached(("cond", targets, given), build)

    # ------------------------------------------------------------------ queries

    def conditional(self, targets: Sequence[str], given: Mapping[str, Any] | None = None) -> np.ndarray:
        """Vector ``P(targets | given)`` over the flattened joint target states.

        ``given`` maps column names to state labels. Raises
        :class:`UnidentifiableCellError` if the conditioning event has no mass.
        """
        targets = tuple(targets)
        given = dict(given or {})
        if not targets:
            raise ConfigError("at least one target variable is required")
        names = tuple(given)
        idx = tuple(self.state_index(n, given[n]) for n in names)
        tensor = self.cond_tensor(targets, names)
        vec = np.asarray(tensor[idx]).reshape(-1)
        if np.isnan(vec).any():
            raise UnidentifiableCellError(f"conditioning cell {given} has zero mass (alpha=0)")
        return vec

    def table(self, targets: Sequence[str], given: Sequence[str] = ()) -> ConditionalTable:
        targets, given = tuple(targets), tuple(given)
        t = self.cond_tensor(targets, given)
        shape = t.shape[: len(given)] + (int(np.prod([self.cards[self.axis(n)] for n in targets])),)
        return ConditionalTable(
            target_vars=targets,
            given_vars=given,
            target_states=tuple(self.states(n) for n in targets),
            given_states=tuple(self.states(n) for n in given),
            probs=t.reshape(shape),
            alpha=self.alpha,
        )

    def dump_table(self, targets: Sequence[str], given: Sequence[str] = ()) -> str:
        return json.dumps(self.table(targets, given).to_json(), default=str)

    def joint_iterator(self, names: Sequence[str], cap: int | None = None) -> Iterator[tuple[State, ...]]:
        """Every joint state of ``names`` in lexicographic order of state indices."""
        cards = [self.cards[self.axis(n)] for n in names]
        _checked_size(cards, self.cap if cap is None else cap)
        return itertools.product(*(self.states(n) for n in names))

    def cell_counts(self, names: Sequence[str]) -> np.ndarray:
        """Raw (weighted) counts marginalised onto ``names``."""
        axes = [self.axis(n) for n in names]
        drop = tuple(a for a in range(len(self.cards)) if a not in axes)
        m = self.counts.sum(axis=drop)
        kept = sorted(axes)
        return np.transpose(m, [kept.index(a) for a in axes])


def _checked_size(cards: Sequence[int], cap: int) -> int:
    size = 1
    for c in cards:
        size *= int(c)
    if size > cap:
        raise CardinalityError(f"joint state space of {size} cells exceeds the cap of {cap}")
    return size
