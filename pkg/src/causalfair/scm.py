"""Small discrete structural causal models with exact counterfactual evaluation.

Every quantity is computed by enumerating the joint exogenous states, so the
results are exact up to floating-point rounding. This module is the ground
truth that the identification formulae are tested against.
"""

from __future__ import annotations

import graphlib
import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np

from .dataset import ColumnSpec, Dataset, SfmRoles
from .effects import Contrast, EffectLedger
from .errors import CardinalityError, ConfigError
from .estimator import SfmEstimator

log = logging.getLogger(__name__)

DEFAULT_ENUM_CAP = 10**6
SAMPLE_BLOCK = 1 << 16


@dataclass(frozen=True)
class Exogenous:
    name: str
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", tuple(float(v) for v in p))
        if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ConfigError(f"exogenous {self.name!r}: probabilities must be a normalized vector")

    @property
    def card(self) -> int:
        return len(self.probs)


@dataclass(frozen=True, eq=False)
class Endogenous:
    """``table[p1, ..., pk]`` is the state index of this variable for parent states ``p``."""

    name: str
    states: tuple[Any, ...]
    parents: tuple[str, ...]
    table: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "parents", tuple(self.parents))
        t = np.asarray(self.table, dtype=np.int64)
        if t.ndim != len(self.parents):
            raise ConfigError(f"{self.name!r}: table has {t.ndim} axes for {len(self.parents)} parents")
        if t.size and (t.min() < 0 or t.max() >= len(self.states)):
            raise ConfigError(f"{self.name!r}: table holds an out-of-range state index")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def card(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class Natural:
    """The value a variable would take naturally under ``setting`` (one level of nesting)."""

    setting: Mapping[str, Any]


Assignment = Union[Any, Natural]


@dataclass(frozen=True)
class NestedQuery:
    """P(outcome holds under ``interventions``, ``factual`` holds in the unaltered world).

    ``outcome`` and ``factual`` map variable names to state labels.
    """

    outcome: Mapping[str, Any]
    interventions: Mapping[str, Assignment] = field(default_factory=dict)
    factual: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class JointDistribution:
    columns: list[ColumnSpec]
    probs: np.ndarray

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def marginal(self, names: Sequence[str]) -> np.ndarray:
        axes = [self.names.index(n) for n in names]
        m = self.probs.sum(axis=tuple(a for a in range(self.probs.ndim) if a not in axes))
        kept = sorted(axes)
        return np.transpose(m, [kept.index(a) for a in axes])

    def estimator(self, roles: SfmRoles, cap: int | None = None) -> SfmEstimator:
        kw = {} if cap is None else {"cap": cap}
        return SfmEstimator.from_distribution(self.columns, roles, self.probs, **kw)


class ScmSpec:
    """Exogenous and endogenous variables plus the SFM role tags."""

    def __init__(self, exogenous: Sequence[Exogenous], endogenous: Sequence[Endogenous], roles: SfmRoles):
        self.exogenous = tuple(exogenous)
        self.endogenous = tuple(endogenous)
        self.roles = roles
        self._exo = {u.name: u for u in self.exogenous}
        self._endo = {v.name: v for v in self.endogenous}
        if len(self._exo) + len(self._endo) != len(self.exogenous) + len(self.endogenous) or set(self._exo) & set(
            self._endo
        ):
            raise ConfigError("variable names must be unique")
        self.order = self._topological_order()
        self._validate()
        self._enum: tuple[dict[str, np.ndarray], np.ndarray] | None = None

    # ------------------------------------------------------------ structure

    def _topological_order(self) -> tuple[str, ...]:
        graph = {}
        for v in self.endogenous:
            for p in v.parents:
                if p not in self._exo and p not in self._endo:
                    raise ConfigError(f"{v.name!r} has unknown parent {p!r}")
            graph[v.name] = {p for p in v.parents if p in self._endo}
        try:
            return tuple(graphlib.TopologicalSorter(graph).static_order())
        except graphlib.CycleError as exc:
            raise ConfigError(f"endogenous graph is cyclic: {exc.args[1]}") from None

    def _validate(self) -> None:
        for v in self.endogenous:
            want = tuple(self.card(p) for p in v.parents)
            if v.table.shape != want:
                raise ConfigError(f"{v.name!r}: table shape {v.table.shape} does not cover parent domain {want}")
        r = self.roles
        for n in r.variables:
            if n not in self._endo:
                raise ConfigError(f"role variable {n!r} is not endogenous")
        desc = self.descendants()
        for w in r.w:
            if set(r.z) & desc[w]:
                raise ConfigError(f"mediator {w!r} is an ancestor of a confounder")
        if r.y not in desc[r.x]:
            log.debug("X has no causal path to Y in this model")
        if r.x in desc[r.y] or set(r.z) & desc[r.x]:
            raise ConfigError("SFM ordering violated: X must precede Y and follow Z")
        for u in self.exogenous:
            children = {v.name for v in self.endogenous if u.name in v.parents}
            if len(children) > 1 and not children <= {r.x, *r.z}:
                raise ConfigError(f"exogenous {u.name!r} is shared outside the X-Z pair")

    def card(self, name: str) -> int:
        if name in self._exo:
            return self._exo[name].card
        return self._endo[name].card

    def variable(self, name: str) -> Endogenous:
        try:
            return self._endo[name]
        except KeyError:
            raise ConfigError(f"unknown endogenous variable {name!r}") from None

    def descendants(self) -> dict[str, set[str]]:
        children: dict[str, set[str]] = {v.name: set() for v in self.endogenous}
        for v in self.endogenous:
            for p in v.parents:
                if p in children:
                    children[p].add(v.name)
        out: dict[str, set[str]] = {}
        for n in reversed(self.order):
            out[n] = set(children[n])
            for c in children[n]:
                out[n] |= out[c]
        return out

    def state_index(self, name: str, label: Any) -> int:
        v = self.variable(name)
        for i, s in enumerate(v.states):
            if s == label or str(s) == str(label):
                return i
        raise ConfigError(f"{label!r} is not a state of {name!r}")

    def columns(self) -> list[ColumnSpec]:
        out = []
        for v in self.endogenous:
            numeric = all(isinstance(s, (int, np.integer)) and not isinstance(s, bool) for s in v.states)
            out.append(ColumnSpec(v.name, "integer" if numeric else "categorical", v.states))
        return out

    # ------------------------------------------------------------ enumeration

    def enumeration(self, cap: int = DEFAULT_ENUM_CAP) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Every joint exogenous state (as per-variable index arrays) and its probability."""
        if self._enum is not None:
            return self._enum
        cards = [u.card for u in self.exogenous]
        size = int(np.prod(cards, dtype=np.int64)) if cards else 1
        if size > cap:
            raise CardinalityError(f"{size} joint exogenous states exceed the cap of {cap}")
        grids = np.indices(cards).reshape(len(cards), -1) if cards else np.zeros((0, 1), dtype=np.int64)
        weights = np.ones(size)
        values = {}
        for u, g in zip(self.exogenous, grids):
            values[u.name] = g
            weights = weights * np.asarray(u.probs)[g]
        self._enum = (values, weights)
        return self._enum

    def propagate(self, exo: Mapping[str, np.ndarray], overrides: Mapping[str, Any] | None = None) -> dict[str, np.ndarray]:
        """Endogenous state indices for each exogenous draw in ``exo``.

        ``overrides`` fixes variables to a state index or to a per-draw index array.
        """
        overrides = overrides or {}
        n = len(next(iter(exo.values()))) if exo else 1
        vals: dict[str, np.ndarray] = dict(exo)
        for name in self.order:
            if name in overrides:
                vals[name] = np.broadcast_to(np.asarray(overrides[name], dtype=np.int64), (n,))
            else:
                v = self._endo[name]
                vals[name] = v.table[tuple(vals[p] for p in v.parents)] if v.parents else np.full(n, int(v.table))
        return {k: vals[k] for k in self.order}

    # ------------------------------------------------------------ serialization

    def to_json(self) -> dict[str, Any]:
        return {
            "exogenous": [{"name": u.name, "probs": list(u.probs)} for u in self.exogenous],
            "endogenous": [
                {"name": v.name, "states": list(v.states), "parents": list(v.parents), "table": v.table.tolist()}
                for v in self.endogenous
            ],
            "roles": self.roles.to_dict(),
        }

    @classmethod
    def from_json(cls, raw: Mapping[str, Any]) -> ScmSpec:
        for key in ("exogenous", "endogenous", "roles"):
            if key not in raw:
                raise ConfigError(f"SCM spec missing required field {key!r}")
        try:
            exo = [Exogenous(u["name"], tuple(u["probs"])) for u in raw["exogenous"]]
            endo = [
                Endogenous(v["name"], tuple(v["states"]), tuple(v["parents"]), np.asarray(v["table"], dtype=np.int64))
                for v in raw["endogenous"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed SCM spec: {exc}") from None
        return cls(exo, endo, SfmRoles.from_dict(raw["roles"]))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> ScmSpec:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"SCM spec is not valid JSON: {exc}") from None
        return cls.from_json(raw)


# ---------------------------------------------------------------------------
# exact queries


def exact_observational(s: ScmSpec, cap: int = DEFAULT_ENUM_CAP) -> JointDistribution:
    """P(V) over all endogenous variables, axes in declaration order."""
    exo, weights = s.enumeration(cap)
    vals = s.propagate(exo)
    cards = [v.card for v in s.endogenous]
    flat = np.ravel_multi_index(tuple(vals[v.name] for v in s.endogenous), cards)
    probs = np.bincount(flat, weights=weights, minlength=int(np.prod(cards))).reshape(cards)
    return JointDistribution(s.columns(), probs)


def _resolve(s: ScmSpec, exo: Mapping[str, np.ndarray], interventions: Mapping[str, Assignment]) -> dict[str, Any]:
    """Turn a (possibly nested) intervention into per-draw state indices.

    Assignments are resolved in topological order. A natural value is computed
    in the world where the already resolved assignments hold and ``setting``
    overrides them.
    """
    resolved: dict[str, Any] = {}
    for name in s.order:
        if name not in interventions:
            continue
        val = interventions[name]
        if isinstance(val, Natural):
            inner = dict(resolved)
            for k, lab in val.setting.items():
                if isinstance(lab, Natural):
                    raise ConfigError("nesting deeper than one level is not supported")
                inner[k] = s.state_index(k, lab)
            resolved[name] = s.propagate(exo, inner)[name]
        else:
            resolved[name] = s.state_index(name, val)
    return resolved


def counterfactual_prob(s: ScmSpec, q: NestedQuery, cap: int = DEFAULT_ENUM_CAP) -> float:
    """Sum of P(u) over exogenous states where the query holds."""
    for name in [*q.outcome, *q.interventions, *q.factual]:
        s.variable(name)
    exo, weights = s.enumeration(cap)
    world = s.propagate(exo, _resolve(s, exo, q.interventions))
    holds = np.ones(len(weights), dtype=bool)
    for name, lab in q.outcome.items():
        holds &= world[name] == s.state_index(name, lab)
    if q.factual:
        actual = s.propagate(exo)
        for name, lab in q.factual.items():
            holds &= actual[name] == s.state_index(name, lab)
    return float(weights[holds].sum())


def potential_outcome(s: ScmSpec, y: Any, x: Any, w_from: Any | None = None) -> float:
    """P(Y_{x, W_{w_from}} = y); with ``w_from`` None the mediators respond to ``x``."""
    r = s.roles
    iv: dict[str, Assignment] = {r.x: x}
    if w_from is not None:
        iv.update({w: Natural({r.x: w_from}) for w in r.w})
    return counterfactual_prob(s, NestedQuery({r.y: y}, iv))


def ground_truth_ledger(s: ScmSpec, c: Contrast) -> EffectLedger:
    """Descriptors evaluated from their counterfactual definitions."""
    r = s.roles
    joint = exact_observational(s)
    pxy = joint.marginal([r.x, r.y])
    i0, i1, iy = s.state_index(r.x, c.x0), s.state_index(r.x, c.x1), s.state_index(r.y, c.y)
    tv = pxy[i1, iy] / pxy[i1].sum() - pxy[i0, iy] / pxy[i0].sum()
    y_x0 = potential_outcome(s, c.y, c.x0)
    y_x1 = potential_outcome(s, c.y, c.x1)
    y_x1_w0 = potential_outcome(s, c.y, c.x1, c.x0)
    y_x0_w1 = potential_outcome(s, c.y, c.x0, c.x1)
    te = y_x1 - y_x0
    ledger = EffectLedger(
        tv=float(tv),
        te=te,
        se=float(tv) - te,
        de=y_x1_w0 - y_x0,
        ie=y_x0_w1 - y_x0,
        ie_reversed=y_x1_w0 - y_x1,
        contrast=c,
        metadata={"source": "scm_oracle"},
    )
    return ledger


def mediator_ground_truth(s: ScmSpec, c: Contrast, order: Sequence[str]) -> dict[str, float]:
    """Per-mediator IE components from nested counterfactuals along ``order``."""
    r = s.roles
    vals = []
    for i in range(len(order) + 1):
        iv: dict[str, Assignment] = {r.x: c.x0}
        iv.update({w: Natural({r.x: c.x1 if j < i else c.x0}) for j, w in enumerate(order)})
        vals.append(counterfactual_prob(s, NestedQuery({r.y: c.y}, iv)))
    return {w: vals[i + 1] - vals[i] for i, w in enumerate(order)}


# ---------------------------------------------------------------------------
# sampling


def sample(s: ScmSpec, n: int, seed: int) -> Dataset:
    """``n`` i.i.d. rows of the endogenous variables.

    Exogenous draws come in fixed-size blocks, each with its own generator
    derived from ``(seed, block)``, so a row's value depends only on its
    position and the seed.
    """
    if n < 1:
        raise ConfigError("sample size must be at least 1")
    cols = s.columns()
    out = np.empty((n, len(cols)), dtype=np.int64)
    for b, start in enumerate(range(0, n, SAMPLE_BLOCK)):
        m = min(SAMPLE_BLOCK, n - start)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        # always draw a full block so rows do not depend on the total sample size
        exo = {u.name: rng.choice(u.card, size=SAMPLE_BLOCK, p=np.asarray(u.probs))[:m] for u in s.exogenous}
        if not exo:
            exo = {"__n__": np.zeros(m, dtype=np.int64)}
        vals = s.propagate(exo)
        out[start : start + m] = np.column_stack([vals[v.name] for v in s.endogenous])
    return Dataset(tuple(cols), out)


# ---------------------------------------------------------------------------
# generators


def _random_probs(rng: np.random.Generator, k: int) -> tuple[float, ...]:
    p = rng.dirichlet(np.full(k, 2.0))
    p = 0.05 / k + 0.95 * p
    return tuple(float(v) for v in p / p.sum())


def _surjective_table(rng: np.random.Generator, parent_cards: Sequence[int], u_card: int, card: int) -> np.ndarray:
    """Random map (parents, u) -> state that hits every state for each parent configuration."""
    n_cfg = int(np.prod(parent_cards, dtype=np.int64)) if parent_cards else 1
    rows = []
    for _ in range(n_cfg):
        row = np.concatenate([rng.permutation(card), rng.integers(0, card, size=u_card - card)])
        rows.append(rng.permutation(row))
    return np.asarray(rows, dtype=np.int64).reshape(tuple(parent_cards) + (u_card,))


def random_sfm_scm(
    seed: int,
    n_z: int | None = None,
    n_w: int | None = None,
    max_card: int = 4,
    y_card: int | None = None,
    shared_xz: bool | None = None,
    z_to_x: bool | None = None,
) -> ScmSpec:
    """Seeded random SFM-compatible SCM with full-support observational distribution.

    X is binary; Z and W variables have 2..``max_card`` states and Y at most 3.
    Each endogenous variable gets its own exogenous parent; optionally one extra
    exogenous variable is shared by X and the confounders.
    """
    rng = np.random.default_rng(seed)
    n_z = int(rng.integers(0, 4)) if n_z is None else n_z
    n_w = int(rng.integers(0, 4)) if n_w is None else n_w
    if not (0 <= n_z <= 3 and 0 <= n_w <= 3 and 2 <= max_card <= 4):
        raise ConfigError("random SCMs support at most 3 confounders, 3 mediators and 4 states")
    y_card = int(rng.integers(2, 4)) if y_card is None else y_card
    shared_xz = bool(rng.integers(0, 2)) if shared_xz is None else shared_xz
    z_to_x = bool(rng.integers(0, 2)) if z_to_x is None else z_to_x
    if n_z == 0:
        shared_xz = False

    exo: list[Exogenous] = []
    endo: list[Endogenous] = []
    cards: dict[str, int] = {}

    def add(name: str, card: int, parents: list[str], extra_u: str | None = None) -> None:
        u = f"U_{name}"
        u_card = card + 1
        exo.append(Exogenous(u, _random_probs(rng, u_card)))
        pa = parents + ([extra_u] if extra_u else [])
        pcards = [cards[p] for p in pa]
        table = _surjective_table(rng, pcards, u_card, card)
        cards[name] = card
        endo.append(Endogenous(name, tuple(range(card)), tuple(pa + [u]), table))

    if shared_xz:
        exo.append(Exogenous("U_XZ", _random_probs(rng, 2)))
        cards["U_XZ"] = 2
    z_names = [f"Z{i + 1}" for i in range(n_z)]
    w_names = [f"W{i + 1}" for i in range(n_w)]
    for i, z in enumerate(z_names):
        parents = [p for p in z_names[:i] if rng.random() < 0.5]
        add(z, int(rng.integers(2, max_card + 1)), parents, "U_XZ" if shared_xz else None)
    x_parents = [z for z in z_names if z_to_x and rng.random() < 0.7]
    add("X", 2, x_parents, "U_XZ" if shared_xz else None)
    for i, w in enumerate(w_names):
        parents = ["X"] + [z for z in z_names if rng.random() < 0.7] + [p for p in w_names[:i] if rng.random() < 0.5]
        add(w, int(rng.integers(2, max_card + 1)), parents)
    y_parents = ["X"] + [z for z in z_names if rng.random() < 0.8] + [w for w in w_names if rng.random() < 0.8]
    add("Y", y_card, y_parents)
    # U_XZ was registered first; keep exogenous order stable for enumeration
    roles = SfmRoles("X", "Y", tuple(z_names), tuple(w_names), (0,), (1,), 1)
    return ScmSpec(exo, endo, roles)


OUTCOME_NOISE_STATES = 20


def two_mediator_scm(seed: int, interaction: bool = False) -> ScmSpec:
    """Two mediators that are independent given (X, Z) and an outcome additive in them.

    Y = 1[U_Y < a(x, z) + b1(w1, z) + b2(w2, z)] with U_Y uniform over 20
    states, so P(Y = 1 | x, z, w1, w2) is additive in the mediators. With
    ``interaction`` a term g(x) * w1 * w2 is added, breaking additivity.
    """
    rng = np.random.default_rng(seed)
    exo = [
        Exogenous("U_Z", _random_probs(rng, 4)),
        Exogenous("U_X", _random_probs(rng, 3)),
        Exogenous("U_W1", _random_probs(rng, 4)),
        Exogenous("U_W2", _random_probs(rng, 4)),
        Exogenous("U_Y", tuple([1.0 / OUTCOME_NOISE_STATES] * OUTCOME_NOISE_STATES)),
    ]
    z = Endogenous("Z", (0, 1, 2), ("U_Z",), _surjective_table(rng, [], 4, 3))
    x = Endogenous("X", (0, 1), ("Z", "U_X"), _surjective_table(rng, [3], 3, 2))
    w1 = Endogenous("W1", (0, 1, 2), ("X", "Z", "U_W1"), _surjective_table(rng, [2, 3], 4, 3))
    w2 = Endogenous("W2", (0, 1, 2), ("X", "Z", "U_W2"), _surjective_table(rng, [2, 3], 4, 3))
    a = rng.integers(0, 5, size=(2, 3))
    b1 = rng.integers(0, 5, size=(3, 3))
    b2 = rng.integers(0, 5, size=(3, 3))
    g = rng.integers(1, 3, size=2)
    xs, zs, w1s, w2s, us = np.indices((2, 3, 3, 3, OUTCOME_NOISE_STATES))
    score = a[xs, zs] + b1[w1s, zs] + b2[w2s, zs]
    if interaction:
        score = score + g[xs] * w1s * w2s
    score = np.minimum(score, OUTCOME_NOISE_STATES)
    y = Endogenous("Y", (0, 1), ("X", "Z", "W1", "W2", "U_Y"), (us < score).astype(np.int64))
    roles = SfmRoles("X", "Y", ("Z",), ("W1", "W2"), (0,), (1,), 1)
    return ScmSpec(exo, [z, x, w1, w2, y], roles)
