"""End-to-end analysis of one dataset: fit, decompose, slice, bundle."""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .dataset import BinningSpec, ColumnSpec, Dataset, SfmRoles, discretize, infer_specs, load_csv
from .decomposition import (
    ConfounderDecomposition,
    MediatorDecomposition,
    PairwiseEffect,
    ZSpecificEffect,
    ie_components,
    se_components,
    x_pairwise_effects,
    z_specific_effects,
)
from .effects import IDENTITY_TOL, Contrast, EffectLedger, ledger_from_vectors, y_indicator
from .errors import ConfigError, DataError, IdentityError
from .estimator import DEFAULT_CAP, SfmEstimator
from .extensions import (
    StepwiseDecomposition,
    ThresholdCurve,
    binarize,
    group_average_vectors,
    pair_weights,
    stepwise_decompose,
    threshold_sweep,
)
from .reporting.bundle import ReportBundle, build_bundle

log = logging.getLogger(__name__)


@dataclass
class AnalysisConfig:
    """Roles plus the optional analyses requested for one run."""

    roles: SfmRoles
    columns: list[ColumnSpec] | None = None
    bins: BinningSpec = field(default_factory=BinningSpec)
    outcome_type: str | None = None
    weighting: str = "arithmetic"
    pairs: bool = False
    z_specific: bool = True
    stepwise_states: list[Any] | None = None
    sweep_grid: list[float] | None = None
    selected_threshold: float | None = None
    strict_threshold: bool = True
    missing: tuple[str, ...] = ("", "?", "NA")
    llm: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> AnalysisConfig:
        if not isinstance(raw, Mapping):
            raise ConfigError("config must be a JSON object")
        roles = SfmRoles.from_dict(raw)
        cols = raw.get("columns")
        step = raw.get("stepwise")
        sweep = raw.get("sweep") or {}
        if step is not None and not isinstance(step, (Mapping, list)):
            raise ConfigError("stepwise must be a list of ordered states or {'states': [...]}")
        return cls(
            roles=roles,
            columns=[ColumnSpec.from_dict(c) for c in cols] if cols is not None else None,
            bins=BinningSpec.from_json(raw.get("bins")),
            outcome_type=raw.get("outcome_type"),
            weighting=raw.get("weighting", "arithmetic"),
            pairs=bool(raw.get("pairs", False)),
            z_specific=bool(raw.get("z_specific", True)),
            stepwise_states=list(step["states"] if isinstance(step, Mapping) else step) if step else None,
            sweep_grid=[float(t) for t in sweep["grid"]] if sweep.get("grid") is not None else None,
            selected_threshold=sweep.get("selected_threshold", raw.get("threshold")),
            strict_threshold=bool(sweep.get("strict", True)),
            missing=tuple(raw.get("missing", ("", "?", "NA"))),
            llm=dict(raw.get("llm") or {}),
        )


def load_dataset(path: str | Path, cfg: AnalysisConfig) -> Dataset:
    """Read the role columns of a CSV (inferring kinds unless declared) and apply binning."""
    names = cfg.roles.variables
    specs = cfg.columns
    if specs is None:
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, nrows=None)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        absent = [n for n in names if n not in frame.columns]
        if absent:
            raise DataError(f"header mismatch: columns {absent} not found in {path}")
        sub = frame[names]
        sub = sub[~sub.isin(list(cfg.missing)).any(axis=1)]
        specs = infer_specs(sub, names)
    else:
        declared = {s.name for s in specs}
        missing_specs = [n for n in names if n not in declared]
        if missing_specs:
            raise ConfigError(f"columns lacks declarations for role columns {missing_specs}")
        specs = [s for s in specs if s.name in names]
    d = load_csv(path, specs, missing=cfg.missing)
    return discretize(d, cfg.bins) if cfg.bins.rules else d


def infer_outcome_type(d: Dataset, y: str) -> str:
    col = d.column(y)
    n = len(col.states)
    if n <= 2:
        return "binary"
    return "continuous" if col.kind == "continuous" else "categorical"


@dataclass
class Analysis:
    estimator: SfmEstimator
    ledger: EffectLedger
    mediators: MediatorDecomposition | None
    confounders: ConfounderDecomposition | None
    x_specific: list[PairwiseEffect] | None
    z_specific: list[ZSpecificEffect] | None
    stepwise: StepwiseDecomposition | None
    curve: ThresholdCurve | None
    bundle: ReportBundle


def _pairs(roles: SfmRoles) -> list[tuple[Any, Any]]:
    return [(a, b) for a in roles.x0_states for b in roles.x1_states]


def group_ledger(est: SfmEstimator, roles: SfmRoles, y: Any, weighting: str = "arithmetic") -> EffectLedger:
    """Ledger of the (weighted) average over all x0 x x1 state pairs."""
    x0s, x1s = list(roles.x0_states), list(roles.x1_states)
    vectors = group_average_vectors(est, x0s, x1s, weighting)
    c = Contrast(x0s[0] if len(x0s) == 1 else tuple(x0s), x1s[0] if len(x1s) == 1 else tuple(x1s), y)
    return ledger_from_vectors(est, c, vectors, y_indicator(est, y))


def group_mediators(est: SfmEstimator, roles: SfmRoles, y: Any, weighting: str) -> MediatorDecomposition | None:
    """Per-mediator split of IE_{x1,x0}, averaged over pairs like the ledger."""
    if not roles.w:
        return None
    order = tuple(roles.w)
    u = y_indicator(est, y)
    comps = dict.fromkeys(order, 0.0)
    weights = pair_weights(est, roles.x0_states, roles.x1_states, weighting)
    for (a, b), wgt in zip(_pairs(roles), weights):
        for n, v in ie_components(est, b, a, order).items():
            comps[n] += wgt * float(np.dot(u, v))
    total = float(np.dot(u, group_average_vectors(est, roles.x0_states, roles.x1_states, weighting)["ie_rev"]))
    residual = abs(sum(comps.values()) - total)
    if residual > IDENTITY_TOL:
        raise IdentityError(f"mediator components do not sum to IE (residual {residual:.3e})")
    return MediatorDecomposition(order, comps, total, residual)


def group_confounders(est: SfmEstimator, roles: SfmRoles, y: Any, weighting: str) -> ConfounderDecomposition | None:
    if not roles.z:
        return None
    order = tuple(roles.z)
    u = y_indicator(est, y)
    comps = dict.fromkeys(order, 0.0)
    weights = pair_weights(est, roles.x0_states, roles.x1_states, weighting)
    for (a, b), wgt in zip(_pairs(roles), weights):
        for n, v in se_components(est, a, b, order).items():
            comps[n] += wgt * float(np.dot(u, v))
    total = float(np.dot(u, group_average_vectors(est, roles.x0_states, roles.x1_states, weighting)["se"]))
    residual = abs(sum(comps.values()) - total)
    if residual > IDENTITY_TOL:
        raise IdentityError(f"confounder components do not sum to SE (residual {residual:.3e})")
    return ConfounderDecomposition(order, comps, total, residual)


def group_z_specific(est: SfmEstimator, roles: SfmRoles, y: Any, weighting: str) -> list[ZSpecificEffect]:
    weights = pair_weights(est, roles.x0_states, roles.x1_states, weighting)
    per_pair = [z_specific_effects(est, Contrast(a, b, y)) for a, b in _pairs(roles)]
    if len(per_pair) == 1:
        return per_pair[0]
    out = []
    for cells in zip(*per_pair):

        def avg(attr: str) -> float | None:
            vals = [getattr(c, attr) for c in cells]
            if any(v is None for v in vals):
                return None
            return float(sum(w * v for w, v in zip(weights, vals)))

        first = cells[0]
        out.append(
            ZSpecificEffect(first.z_state, avg("te"), avg("de"), avg("ie"), avg("ie_reversed"), first.p_z, first.n_rows)
        )
    return out


def resolve_target(est: SfmEstimator, roles: SfmRoles) -> Any:
    if roles.y_target is not None:
        return est.states(roles.y)[est.state_index(roles.y, roles.y_target)]
    states = est.states(roles.y)
    if len(states) == 2:
        log.warning("y_target not set; using the last state %r of %s", states[-1], roles.y)
        return states[-1]
    raise ConfigError("config missing required field 'y_target' (Y has more than two states)")


def analyze(
    d: Dataset,
    cfg: AnalysisConfig,
    alpha: float = 1.0,
    cap: int = DEFAULT_CAP,
) -> Analysis:
    roles = cfg.roles
    curve = None
    outcome_type = cfg.outcome_type
    if cfg.sweep_grid is not None:
        curve = threshold_sweep(
            d, roles, cfg.sweep_grid, alpha=alpha, strict=cfg.strict_threshold,
            selected_threshold=cfg.selected_threshold, cap=cap,
        )
        outcome_type = outcome_type or "continuous"
    fit_data = d
    if cfg.selected_threshold is not None and d.column(roles.y).numeric:
        fit_data = binarize(d, roles.y, float(cfg.selected_threshold), cfg.strict_threshold)
        roles = SfmRoles(roles.x, roles.y, roles.z, roles.w, roles.x0_states, roles.x1_states, 1)
        outcome_type = outcome_type or "continuous"
    outcome_type = outcome_type or infer_outcome_type(d, roles.y)

    est = SfmEstimator.fit(fit_data, roles, alpha, cap)
    y = resolve_target(est, roles)
    ledger = group_ledger(est, roles, y, cfg.weighting)
    mediators = group_mediators(est, roles, y, cfg.weighting)
    confounders = group_confounders(est, roles, y, cfg.weighting)
    x_specific = x_pairwise_effects(est, y, roles.x0_states, roles.x1_states) if cfg.pairs else None
    z_specific = group_z_specific(est, roles, y, cfg.weighting) if cfg.z_specific and roles.z else None
    stepwise = None
    if cfg.stepwise_states is not None:
        states = cfg.stepwise_states or list(est.states(roles.x))
        stepwise = stepwise_decompose(est, states, y)
    bundle = build_bundle(
        ledger,
        x0=list(roles.x0_states),
        x1=list(roles.x1_states),
        y_target=y,
        outcome_type=outcome_type,
        mediators=mediators,
        confounders=confounders,
        x_specific=x_specific,
        z_specific=z_specific,
        stepwise=stepwise,
        curve=curve,
        roles=roles.to_dict(),
        dataset_digest=fit_data.digest(),
    )
    return Analysis(est, ledger, mediators, confounders, x_specific, z_specific, stepwise, curve, bundle)


# ---------------------------------------------------------------------------
# human-readable table


def _fmt(v: float) -> str:
    s = f"{v:.4f}"
    return "0.0000" if s == "-0.0000" else s


def ledger_table(
    ledger: EffectLedger,
    mediators: MediatorDecomposition | None = None,
    confounders: ConfounderDecomposition | None = None,
) -> str:
    """Nested text table: components indented under their parent descriptor."""
    rows: list[tuple[str, int, float, bool]] = [("TV_{x0,x1}(y)", 0, ledger.tv, True), ("TE_{x0,x1}(y)", 0, ledger.te, True)]
    rows.append(("DE_{x0,x1}(y)", 1, ledger.de, False))
    rows.append(("IE_{x1,x0}(y)", 1, ledger.ie_reversed, False))
    for name, v in (mediators.components.items() if mediators else ()):
        rows.append((f"-> IE^{{{name}}}_{{x1,x0}}(y)", 2, v, False))
    rows.append(("SE_{x0,x1}(y)", 0, ledger.se, True))
    for name, v in (confounders.components.items() if confounders else ()):
        rows.append((f"-> SE^{{{name}}}_{{x0,x1}}(y)", 1, v, False))
    c = ledger.contrast
    lines = [f"x0 = {c.x0}, x1 = {c.x1}, y = {c.y}", f"{'Effect':<40}{'Value':>10}{'% of |TV|':>12}"]
    for label, depth, v, pct in rows:
        share = f"{round(100 * abs(v) / abs(ledger.tv)):>12d}" if pct and ledger.tv != 0 else ""
        lines.append(f"{'    ' * depth + label:<40}{_fmt(v):>10}{share}")
    res = ledger.identity_residuals
    lines.append("")
    lines.append(f"residual tv - te - se          = {res['tv_minus_te_minus_se']:.3e}")
    lines.append(f"residual te - (de - ie_rev)    = {res['te_minus_de_plus_ie_rev']:.3e}")
    return "\n".join(lines) + "\n"
