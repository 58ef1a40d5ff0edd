"""Tabular data loading, discretization and role binding.

A :class:`Dataset` stores every cell as an index into its column's state list,
so downstream estimation only ever deals with small non-negative integers.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

KINDS = ("categorical", "ordinal", "integer", "continuous")
NUMERIC_KINDS = ("integer", "continuous")
DEFAULT_CARDINALITY_WARNING = 10**6

State = Union[str, int, float]


@dataclass(frozen=True)
class ColumnSpec:
    """Name, kind and (optionally) the ordered state labels of one column.

    ``edges`` is filled in by :func:`discretize` and records the inner cut points
    of a binned numeric column.
    """

    name: str
    kind: str = "categorical"
    states: tuple[State, ...] | None = None
    edges: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.states is not None:
            object.__setattr__(self, "states", tuple(self.states))
            if len(set(self.states)) != len(self.states):
                raise ConfigError(f"column {self.name!r}: duplicate state labels")
        if self.kind == "ordinal" and (self.states is None or len(self.states) < 2):
            raise ConfigError(f"ordinal column {self.name!r} needs at least 2 declared states")

    @property
    def numeric(self) -> bool:
        return self.kind in NUMERIC_KINDS

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.states is not None:
            out["states"] = list(self.states)
        if self.edges is not None:
            out["edges"] = list(self.edges)
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> ColumnSpec:
        if "name" not in raw:
            raise ConfigError("column spec missing required field 'name'")
        states = raw.get("states", raw.get("declared_states"))
        return cls(
            name=str(raw["name"]),
            kind=raw.get("kind", "categorical"),
            states=tuple(states) if states is not None else None,
        )


@dataclass(frozen=True)
class Dataset:
    """Immutable state-index matrix plus the column specs that give it meaning."""

    columns: tuple[ColumnSpec, ...]
    codes: np.ndarray
    n_dropped: int = 0

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 2 or codes.shape[1] != len(self.columns):
            raise DataError("codes matrix shape does not match the column list")
        for j, col in enumerate(self.columns):
            if col.states is None:
                raise DataError(f"column {col.name!r} has unresolved states")
            if codes.shape[0] and (codes[:, j].min() < 0 or codes[:, j].max() >= len(col.states)):
                raise DataError(f"column {col.name!r} holds an out-of-range state index")
        codes.setflags(write=False)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "codes", codes)

    @property
    def n_rows(self) -> int:
        return int(self.codes.shape[0])

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def index(self, name: str) -> int:
        for j, col in enumerate(self.columns):
            if col.name == name:
                return j
        raise ConfigError(f"unknown column {name!r}")

    def column(self, name: str) -> ColumnSpec:
        return self.columns[self.index(name)]

    def states(self, name: str) -> tuple[State, ...]:
        return self.column(name).states  # type: ignore[return-value]

    def state_index(self, name: str, label: Any) -> int:
        return state_index(self.column(name), label)

    def codes_of(self, name: str) -> np.ndarray:
        return self.codes[:, self.index(name)]

    def values_of(self, name: str) -> np.ndarray:
        col = self.column(name)
        return np.asarray(col.states, dtype=object)[self.codes_of(name)]

    def marginal_counts(self, name: str) -> dict[State, int]:
        col = self.column(name)
        counts = np.bincount(self.codes_of(name), minlength=len(col.states))
        return {s: int(n) for s, n in zip(col.states, counts)}

    def with_column(self, spec: ColumnSpec, codes: np.ndarray) -> Dataset:
        """Replace (or append) a column, keeping every other column untouched."""
        codes = np.asarray(codes, dtype=np.int64).reshape(-1, 1)
        cols = list(self.columns)
        mat = np.array(self.codes)
        try:
            j = self.index(spec.name)
            cols[j] = spec
            mat[:, j] = codes[:, 0]
        except ConfigError:
            cols.append(spec)
            mat = np.hstack([mat, codes])
        return Dataset(tuple(cols), mat, self.n_dropped)

    def select(self, names: Sequence[str]) -> Dataset:
        idx = [self.index(n) for n in names]
        return Dataset(tuple(self.columns[i] for i in idx), self.codes[:, idx], self.n_dropped)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({c.name: self.values_of(c.name) for c in self.columns})

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.names)
            labels = [[_format_label(s) for s in c.states] for c in self.columns]
            for row in self.codes:
                writer.writerow([labels[j][k] for j, k in enumerate(row)])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps([c.to_dict() for c in self.columns], default=str).encode())
        h.update(np.ascontiguousarray(self.codes).tobytes())
        return h.hexdigest()[:16]


def _format_label(s: State) -> str:
    return repr(s) if isinstance(s, float) else str(s)


def state_index(col: ColumnSpec, label: Any) -> int:
    """Position of ``label`` in ``col.states``; numbers and their strings both match."""
    states = col.states or ()
    try:
        return states.index(label)
    except ValueError:
        pass
    key = str(label)
    for i, s in enumerate(states):
        if str(s) == key or _format_label(s) == key:
            return i
    if col.numeric:
        try:
            val = float(label)
        except (TypeError, ValueError):
            val = None
        if val is not None:
            for i, s in enumerate(states):
                if float(s) == val:
                    return i
    raise ConfigError(f"unknown state {label!r} for column {col.name!r}")


# ---------------------------------------------------------------------------
# CSV loading


def _parse_cells(col: ColumnSpec, raw: pd.Series) -> tuple[tuple[State, ...], np.ndarray]:
    if col.kind == "integer":
        try:
            parsed = [int(v) for v in raw]
        except ValueError as exc:
            raise DataError(f"column {col.name!r}: unparseable integer cell ({exc})") from None
    elif col.kind == "continuous":
        try:
            parsed = [float(v) for v in raw]
        except ValueError as exc:
            raise DataError(f"column {col.name!r}: unparseable numeric cell ({exc})") from None
    else:
        parsed = list(raw)

    if col.states is not None:
        lookup: dict[Any, int] = {}
        for i, s in enumerate(col.states):
            lookup[s] = i
            lookup.setdefault(_format_label(s), i)
        try:
            codes = np.fromiter((lookup[v] for v in parsed), dtype=np.int64, count=len(parsed))
        except KeyError as exc:
            raise DataError(f"column {col.name!r}: cell {exc.args[0]!r} is not a declared state") from None
        return col.states, codes

    states = tuple(sorted(set(parsed)))
    lookup = {s: i for i, s in enumerate(states)}
    codes = np.fromiter((lookup[v] for v in parsed), dtype=np.int64, count=len(parsed))
    return states, codes


def infer_specs(frame: pd.DataFrame, names: Sequence[str] | None = None) -> list[ColumnSpec]:
    """Guess a kind for each column: integer, then continuous, else categorical."""
    specs = []
    for name in names if names is not None else frame.columns:
        cells = [v for v in frame[name] if v != ""]
        kind = "categorical"
        try:
            [int(v) for v in cells]
            kind = "integer"
        except ValueError:
            try:
                [float(v) for v in cells]
                kind = "continuous"
            except ValueError:
                pass
        specs.append(ColumnSpec(str(name), kind))
    return specs


def load_csv(
    path: str | Path,
    specs: Sequence[ColumnSpec] | None = None,
    missing: Sequence[str] = ("",),
) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    Only the columns named in ``specs`` are kept (all columns when ``specs`` is
    None, with inferred kinds). Rows with a missing cell in any kept column are
    dropped; the count is stored on ``Dataset.n_dropped``.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, encoding="utf-8")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if specs is None:
        specs = infer_specs(frame)
    header = set(frame.columns)
    absent = [s.name for s in specs if s.name not in header]
    if absent:
        raise DataError(f"header mismatch: columns {absent} not found in {path}")

    names = [s.name for s in specs]
    frame = frame[names]
    keep = ~frame.isin(list(missing)).any(axis=1)
    n_dropped = int((~keep).sum())
    frame = frame[keep]
    if len(frame) == 0:
        raise DataError(f"{path}: dataset is empty after cleaning ({n_dropped} rows dropped)")
    if n_dropped:
        logger.info("dropped %d rows with missing role cells", n_dropped)

    columns, codes = [], []
    for spec in specs:
        states, col_codes = _parse_cells(spec, frame[spec.name])
        columns.append(ColumnSpec(spec.name, spec.kind, states, spec.edges))
        codes.append(col_codes)
    return Dataset(tuple(columns), np.column_stack(codes), n_dropped)


def from_frame(frame: pd.DataFrame, specs: Sequence[ColumnSpec] | None = None) -> Dataset:
    """Build a Dataset from an in-memory frame; NaN cells count as missing."""
    if specs is None:
        specs = []
        for name in frame.columns:
            s = frame[name]
            if pd.api.types.is_integer_dtype(s):
                specs.append(ColumnSpec(str(name), "integer"))
            elif pd.api.types.is_float_dtype(s):
                specs.append(ColumnSpec(str(name), "continuous"))
            else:
                specs.append(ColumnSpec(str(name), "categorical"))
    sub = frame[[s.name for s in specs]]
    keep = sub.notna().all(axis=1)
    sub = sub[keep]
    if len(sub) == 0:
        raise DataError("dataset is empty after cleaning")
    columns, codes = [], []
    for spec in specs:
        values = sub[spec.name].tolist()
        if spec.kind == "integer":
            values = [int(v) for v in values]
        elif spec.kind == "continuous":
            values = [float(v) for v in values]
        else:
            values = [str(v) for v in values]
        states, col_codes = _parse_cells(spec, pd.Series(values, dtype=object))
        columns.append(ColumnSpec(spec.name, spec.kind, states, spec.edges))
        codes.append(col_codes)
    return Dataset(tuple(columns), np.column_stack(codes), int((~keep).sum()))


# ---------------------------------------------------------------------------
# Discretization


@dataclass(frozen=True)
class EqualWidth:
    n_bins: int

    def __post_init__(self) -> None:
        if self.n_bins < 2:
            raise ConfigError("equal_width needs n_bins >= 2")


@dataclass(frozen=True)
class ExplicitEdges:
    edges: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        if not self.edges:
            raise ConfigError("explicit_edges needs at least one cut point")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ConfigError("explicit edges must be strictly ascending")


@dataclass(frozen=True)
class Passthrough:
    pass


BinRule = Union[EqualWidth, ExplicitEdges, Passthrough]


@dataclass(frozen=True)
class BinningSpec:
    rules: Mapping[str, BinRule] = field(default_factory=dict)

    @classmethod
    def from_json(cls, raw: Mapping[str, Any] | None) -> BinningSpec:
        rules: dict[str, BinRule] = {}
        for name, rule in (raw or {}).items():
            if rule == "passthrough" or rule is None:
                rules[name] = Passthrough()
            elif isinstance(rule, Mapping) and "edges" in rule:
                rules[name] = ExplicitEdges(tuple(rule["edges"]))
            elif isinstance(rule, Mapping) and "n_bins" in rule:
                rules[name] = EqualWidth(int(rule["n_bins"]))
            elif isinstance(rule, Sequence) and not isinstance(rule, str):
                rules[name] = ExplicitEdges(tuple(rule))
            else:
                raise ConfigError(f"bins.{name}: expected 'passthrough', {{'edges': [...]}} or {{'n_bins': k}}")
        return cls(rules)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name, rule in self.rules.items():
            if isinstance(rule, EqualWidth):
                out[name] = {"n_bins": rule.n_bins}
            elif isinstance(rule, ExplicitEdges):
                out[name] = {"edges": list(rule.edges)}
            else:
                out[name] = "passthrough"
        return out


def _num(v: float) -> str:
    return f"{v:g}"


def bin_labels(lower: float, edges: Sequence[float], upper: float | None) -> list[str]:
    """Labels for the intervals [lower, e1), [e1, e2), ..., [ek, upper].

    With ``upper`` None the last bin is open-ended ("80+").
    """
    bounds = [lower, *edges]
    labels = [f"{_num(a)}–{_num(b)}" for a, b in zip(bounds, edges)]
    labels.append(f"{_num(edges[-1])}+" if upper is None else f"{_num(edges[-1])}–{_num(upper)}")
    return labels


def discretize(d: Dataset, b: BinningSpec) -> Dataset:
    """Replace each numeric column named in ``b`` with ordinal bin labels.

    Bins are left-closed, ``[a, b)``; the last equal-width bin also holds the
    maximum. Empty bins are kept so every column keeps a fixed state space.
    """
    out = d
    for name, rule in b.rules.items():
        if isinstance(rule, Passthrough):
            continue
        col = d.column(name)
        if not col.numeric:
            raise ConfigError(f"cannot discretize non-numeric column {name!r} ({col.kind})")
        values = np.asarray(col.states, dtype=float)[d.codes_of(name)]
        lo, hi = float(values.min()), float(values.max())
        if isinstance(rule, ExplicitEdges):
            inner = np.asarray(rule.edges)
            labels = bin_labels(min(0.0, np.floor(lo)), rule.edges, None)
        else:
            width = (hi - lo) / rule.n_bins
            if width == 0:
                width = 1.0 / rule.n_bins
            inner = lo + width * np.arange(1, rule.n_bins)
            labels = bin_labels(lo, [float(e) for e in inner], lo + width * rule.n_bins)
        codes = np.searchsorted(inner, values, side="right")
        spec = ColumnSpec(name, "ordinal", tuple(labels), tuple(float(e) for e in inner))
        out = out.with_column(spec, codes)
    return out


# ---------------------------------------------------------------------------
# Roles


@dataclass(frozen=True)
class SfmRoles:
    """Standard Fairness Model role assignment.

    ``z`` and ``w`` are ordered; their order is taken as a topological order.
    """

    x: str
    y: str
    z: tuple[str, ...] = ()
    w: tuple[str, ...] = ()
    x0_states: tuple[Any, ...] = ()
    x1_states: tuple[Any, ...] = ()
    y_target: Any = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", tuple(self.z))
        object.__setattr__(self, "w", tuple(self.w))
        object.__setattr__(self, "x0_states", tuple(self.x0_states))
        object.__setattr__(self, "x1_states", tuple(self.x1_states))
        names = self.variables
        if len(set(names)) != len(names):
            raise ConfigError(f"roles must name distinct columns, got {names}")
        if not self.x0_states or not self.x1_states:
            raise ConfigError("x0_states and x1_states must both be non-empty")
        overlap = {str(s) for s in self.x0_states} & {str(s) for s in self.x1_states}
        if overlap:
            raise ConfigError(f"x0_states and x1_states overlap: {sorted(overlap)}")

    @property
    def variables(self) -> list[str]:
        """Role columns in the SFM topological order used by the estimator."""
        return [*self.z, self.x, *self.w, self.y]

    def to_dict(self) -> dict[str, Any]:
        return {
            "x": self.x,
            "y": self.y,
            "z": list(self.z),
            "w": list(self.w),
            "x0_states": list(self.x0_states),
            "x1_states": list(self.x1_states),
            "y_target": self.y_target,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> SfmRoles:
        for key in ("x", "y", "x0_states", "x1_states"):
            if key not in raw:
                raise ConfigError(f"config missing required field {key!r}")
        def _list(key: str) -> tuple:
            v = raw.get(key) or ()
            return (v,) if isinstance(v, (str, int, float)) else tuple(v)
        return cls(
            x=raw["x"],
            y=raw["y"],
            z=_list("z"),
            w=_list("w"),
            x0_states=_list("x0_states"),
            x1_states=_list("x1_states"),
            y_target=raw.get("y_target"),
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ValidationReport:
    missing_columns: list[str] = field(default_factory=list)
    unseen_states: dict[str, list[Any]] = field(default_factory=dict)
    unknown_states: dict[str, list[Any]] = field(default_factory=dict)
    cardinality: int | None = None
    cardinality_cap: int = DEFAULT_CARDINALITY_WARNING
    marginal_counts: dict[Any, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.missing_columns and not self.unknown_states

    @property
    def cardinality_warning(self) -> bool:
        return self.cardinality is not None and self.cardinality > self.cardinality_cap

    def to_dict(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "missing_columns": self.missing_columns,
            "unseen_states": self.unseen_states,
            "unknown_states": self.unknown_states,
            "cardinality": self.cardinality,
            "cardinality_warning": self.cardinality_warning,
            "marginal_counts": {str(k): v for k, v in self.marginal_counts.items()},
            "warnings": self.warnings,
        }


def validate_roles(d: Dataset, r: SfmRoles, cap: int = DEFAULT_CARDINALITY_WARNING) -> ValidationReport:
    """Check a role assignment against the data; never raises."""
    rep = ValidationReport(cardinality_cap=cap)
    present = set(d.names)
    rep.missing_columns = [n for n in r.variables if n not in present]

    if r.x in present:
        counts = d.marginal_counts(r.x)
        col = d.column(r.x)
        for key in ("x0_states", "x1_states"):
            for s in getattr(r, key):
                try:
                    i = state_index(col, s)
                except ConfigError:
                    rep.unknown_states.setdefault(key, []).append(s)
                    continue
                if counts[col.states[i]] == 0:
                    rep.unseen_states.setdefault(key, []).append(s)
        rep.marginal_counts = counts
    if r.y in present and r.y_target is not None:
        try:
            state_index(d.column(r.y), r.y_target)
        except ConfigError:
            rep.unknown_states.setdefault("y_target", []).append(r.y_target)

    if not rep.missing_columns:
        card = 1
        for n in (*r.z, *r.w, r.y):
            card *= len(d.states(n))
        rep.cardinality = card
        if rep.cardinality_warning:
            rep.warnings.append(f"joint state space |Z|*|W|*|Y| = {card} exceeds {cap}")
        for n in r.variables:
            if d.column(n).kind == "continuous" and n != r.y:
                rep.warnings.append(f"continuous role column {n!r} should be discretized")
    return rep
