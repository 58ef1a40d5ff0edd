"""The JSON report bundle: every analysis result in one versioned object."""

from __future__ import annotations

import copy
import json
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any

import jsonschema
import numpy as np

from ..decomposition import ConfounderDecomposition, MediatorDecomposition, PairwiseEffect, ZSpecificEffect
from ..effects import IDENTITY_TOL, EffectLedger
from ..errors import IdentityError, ReportError
from ..extensions import StepwiseDecomposition, ThresholdCurve

SCHEMA_VERSION = "1"
DECIMALS = 4
OUTCOME_TYPES = ("binary", "categorical", "continuous")


@lru_cache(maxsize=1)
def bundle_schema() -> dict[str, Any]:
    text = resources.files(__package__).joinpath("bundle_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def round_value(v: float) -> float:
    r = round(float(v), DECIMALS)
    return 0.0 if r == 0 else r


def _rounded(obj: Any) -> Any:
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise ReportError(f"non-finite value {obj!r} cannot be serialized")
        return round_value(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Mapping):
        return {str(k): _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    raise ReportError(f"cannot serialize value of type {type(obj).__name__}")


def _label(v: Any) -> Any:
    if isinstance(v, np.generic):
        return v.item()
    return v


def _group(states: Sequence[Any]) -> Any:
    states = [_label(s) for s in states]
    return states[0] if len(states) == 1 else states


@dataclass(eq=True)
class ReportBundle:
    """Full-precision bundle content; rounding happens in :meth:`to_dict`."""

    data: dict[str, Any]

    def to_dict(self) -> dict[str, Any]:
        return _rounded(self.data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def rounded(self) -> ReportBundle:
        return ReportBundle(self.to_dict())

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> ReportBundle:
        validate_bundle(raw)
        return cls(copy.deepcopy(dict(raw)))

    @classmethod
    def from_json(cls, text: str) -> ReportBundle:
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ReportError(f"bundle is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    @property
    def effects(self) -> dict[str, float]:
        return self.data["effects"]


def validate_bundle(raw: Any) -> None:
    """Raise :class:`ReportError` naming the JSON pointer of the first offending field."""
    validator = jsonschema.Draft202012Validator(bundle_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise _pointer_error(pointer, err.message)


def _pointer_error(pointer: str, message: str) -> ReportError:
    exc = ReportError(f"bundle invalid at {pointer}: {message}")
    exc.pointer = pointer  # type: ignore[attr-defined]
    return exc


def _check_components(name: str, comps: Mapping[str, float], total: float) -> None:
    if comps and abs(sum(comps.values()) - total) > IDENTITY_TOL:
        raise IdentityError(f"{name} components do not sum to the aggregate")


def build_bundle(
    ledger: EffectLedger,
    *,
    x0: Sequence[Any] | Any = None,
    x1: Sequence[Any] | Any = None,
    y_target: Any = None,
    outcome_type: str = "binary",
    mediators: MediatorDecomposition | None = None,
    confounders: ConfounderDecomposition | None = None,
    x_specific: Sequence[PairwiseEffect] | None = None,
    z_specific: Sequence[ZSpecificEffect] | None = None,
    stepwise: StepwiseDecomposition | None = None,
    curve: ThresholdCurve | None = None,
    roles: Mapping[str, Any] | None = None,
    dataset_digest: str | None = None,
) -> ReportBundle:
    """Assemble a bundle; analyses that were not run are stored as null.

    ``mediators`` must decompose IE_{x1,x0} (the bundle's ``ie``); the
    identities linking all supplied pieces are re-checked first.
    """
    if outcome_type not in OUTCOME_TYPES:
        raise ReportError(f"outcome_type must be one of {OUTCOME_TYPES}")
    ledger.check()
    if mediators is not None:
        if abs(mediators.total_ie - ledger.ie_reversed) > IDENTITY_TOL:
            raise IdentityError("mediator decomposition does not match the ledger's IE_{x1,x0}")
        _check_components("mediator", mediators.components, ledger.ie_reversed)
    if confounders is not None:
        if abs(confounders.total_se - ledger.se) > IDENTITY_TOL:
            raise IdentityError("confounder decomposition does not match the ledger's SE")
        _check_components("confounder", confounders.components, ledger.se)

    c = ledger.contrast
    x0 = c.x0 if x0 is None else x0
    x1 = c.x1 if x1 is None else x1
    data: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "x0": _group(x0) if isinstance(x0, (list, tuple)) else _label(x0),
        "x1": _group(x1) if isinstance(x1, (list, tuple)) else _label(x1),
        "y_target": _label(c.y if y_target is None else y_target),
        "outcome_type": outcome_type,
        "effects": {
            "tv": ledger.tv,
            "te": ledger.te,
            "de": ledger.de,
            "ie": ledger.ie_reversed,
            "se": ledger.se,
        },
        "ie_by_mediator": dict(mediators.components) if mediators is not None and mediators.components else None,
        "se_by_confounder": dict(confounders.components) if confounders is not None and confounders.components else None,
        "x_specific": None,
        "z_specific": None,
        "stepwise": {"enabled": False},
        "threshold_curve": None,
        "metadata": {
            "n_rows": ledger.metadata.get("n_rows"),
            "alpha": ledger.metadata.get("alpha", 0.0),
            "roles": dict(roles or {}),
            "dataset_digest": dataset_digest,
        },
    }
    if x_specific:
        data["x_specific"] = [
            {
                "X_value_pair": [_label(p.x0), _label(p.x1)],
                "te": p.ledger.te,
                "de": p.ledger.de,
                "ie": p.ledger.ie_reversed,
            }
            for p in x_specific
        ]
    if z_specific:
        data["z_specific"] = [
            {
                "z_state": {k: _label(v) for k, v in s.z_state.items()},
                "te": s.te,
                "de": s.de,
                "ie": s.ie_reversed,
                "n_rows": s.n_rows,
            }
            for s in z_specific
        ]
    if stepwise is not None:
        for k in ("te", "tv", "se"):
            if k in stepwise.residuals and stepwise.residuals[k] > IDENTITY_TOL:
                raise IdentityError(f"stepwise {k} does not telescope")
        data["stepwise"] = {
            "enabled": True,
            "effects_by_step": [
                {
                    "from": _label(s["from"]),
                    "to": _label(s["to"]),
                    "te": s["te"],
                    "tv": s["tv"],
                    "se": s["se"],
                    "n_rows": s["n_rows"],
                }
                for s in stepwise.steps
            ],
        }
    if curve is not None:
        data["threshold_curve"] = {
            "grid": list(curve.grid),
            **{k: list(v) for k, v in curve.values.items()},
            "selected_threshold": curve.selected_threshold,
        }
    bundle = ReportBundle(data)
    validate_bundle(bundle.to_dict())
    return bundle
