"""Total variation and its causal components for one protected contrast.

All quantities are first computed as vectors over the states of Y, so that
per-state effects, utilities and expectations reuse the same sums; the public
scalar functions then pick the requested target state.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import ConfigError, IdentityError, UnidentifiableCellError
from .estimator import SfmEstimator

IDENTITY_TOL = 1e-9
KINDS = ("tv", "te", "se", "de", "ie", "ie_rev")


@dataclass(frozen=True)
class Contrast:
    """Change of the protected feature from ``x0`` to ``x1``, scored at target state ``y``."""

    x0: Any
    x1: Any
    y: Any

    def swapped(self) -> Contrast:
        return Contrast(self.x1, self.x0, self.y)


@dataclass
class EffectLedger:
    """The five descriptors for one contrast.

    ``ie`` is IE_{x0,x1}; ``ie_reversed`` is IE_{x1,x0}, the term for which
    ``te = de - ie_reversed``.
    """

    tv: float
    te: float
    se: float
    de: float
    ie: float
    ie_reversed: float
    contrast: Contrast
    identity_residuals: dict[str, float] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.identity_residuals:
            self.identity_residuals = {
                "tv_minus_te_minus_se": self.tv - self.te - self.se,
                "te_minus_de_plus_ie_rev": self.te - (self.de - self.ie_reversed),
            }

    def values(self) -> dict[str, float]:
        return {"tv": self.tv, "te": self.te, "se": self.se, "de": self.de, "ie": self.ie, "ie_rev": self.ie_reversed}

    def check(self, tol: float = IDENTITY_TOL) -> None:
        """Raise :class:`IdentityError` if an identity or range invariant fails."""
        if self.se != self.tv - self.te:
            raise IdentityError("se must equal tv - te")
        res = abs(self.identity_residuals["te_minus_de_plus_ie_rev"])
        if res > tol:
            raise IdentityError(f"te != de - ie_reversed (residual {res:.3e})")
        for k, v in self.values().items():
            if not -1 - 1e-12 <= v <= 1 + 1e-12:
                raise IdentityError(f"{k} = {v} outside [-1, 1]")


# ---------------------------------------------------------------------------
# kernels


def _safe_weight(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise ``a * b`` where a zero factor wins over an undefined (NaN) one."""
    with np.errstate(invalid="ignore"):
        prod = a * b
    return np.where((a == 0) | (b == 0), 0.0, prod)


def _contract(values: np.ndarray, weights: np.ndarray, keep_last: bool = True) -> np.ndarray:
    """Sum ``values * weights`` over every axis except (optionally) the last one."""
    prod = _safe_weight(weights, values)
    if np.isnan(prod).any():
        raise UnidentifiableCellError(
            "identification formula needs a conditional on a zero-probability cell (alpha=0)"
        )
    axes = tuple(range(prod.ndim - 1)) if keep_last else None
    return prod.sum(axis=axes)


class EffectTerms:
    """Cached building blocks of the identification formulae for one estimator.

    ``x`` arguments are state indices of X. Every method returns a vector over
    the states of Y.
    """

    def __init__(self, est: SfmEstimator):
        self.est = est
        r = est.roles
        self.z = tuple(r.z)
        self.w = tuple(r.w)
        self.kz = len(self.z)
        self.pz = est.marginal(self.z) if self.z else np.ones(())
        self.y_given_x = est.cond_tensor([r.y], [r.x])
        self.y_given_xz = est.cond_tensor([r.y], [*self.z, r.x])
        self.w_given_xz = est.cond_tensor(self.w, [*self.z, r.x])
        self.y_given_xzw = est.cond_tensor([r.y], [*self.z, r.x, *self.w])

    @property
    def n_y(self) -> int:
        return self.y_given_x.shape[-1]

    def observed(self, x: int) -> np.ndarray:
        """P(y | x)."""
        vec = self.y_given_x[x]
        if np.isnan(vec).any():
            raise UnidentifiableCellError("P(x) = 0 for a contrast state (alpha=0)")
        return vec

    def interventional(self, x: int) -> np.ndarray:
        """P(Y_x = y) = sum_z P(y | x, z) P(z)."""
        py = np.take(self.y_given_xz, x, axis=self.kz)
        return _contract(py, self.pz[..., None])

    def nested(self, x_y: int, x_w: int) -> np.ndarray:
        """P(Y_{x_y, W_{x_w}} = y) = sum_{z,w} P(y | x_y, z, w) P(w | x_w, z) P(z)."""
        py = np.take(self.y_given_xzw, x_y, axis=self.kz)
        pw = np.take(self.w_given_xz, x_w, axis=self.kz)
        weight = _safe_weight(self.pz.reshape(self.pz.shape + (1,) * len(self.w)), pw)
        return _contract(py, weight[..., None])

    def vectors(self, x0: int, x1: int) -> dict[str, np.ndarray]:
        tv = self.observed(x1) - self.observed(x0)
        te = self.interventional(x1) - self.interventional(x0)
        n00 = self.nested(x0, x0)
        n10 = self.nested(x1, x0)
        n01 = self.nested(x0, x1)
        n11 = self.nested(x1, x1)
        return {
            "tv": tv,
            "te": te,
            "se": tv - te,
            "de": n10 - n00,
            "ie": n01 - n00,
            "ie_rev": n10 - n11,
        }


def effect_terms(est: SfmEstimator) -> EffectTerms:
    """Shared :class:`EffectTerms` for an estimator (built once, then reused)."""
    terms = getattr(est, "_effect_terms", None)
    if terms is None:
        terms = EffectTerms(est)
        est._effect_terms = terms  # type: ignore[attr-defined]
    return terms


def _x_index(est: SfmEstimator, label: Any) -> int:
    return est.state_index(est.roles.x, label)


def effect_vectors(est: SfmEstimator, x0: Any, x1: Any) -> dict[str, np.ndarray]:
    """Every descriptor as a vector over the states of Y."""
    return effect_terms(est).vectors(_x_index(est, x0), _x_index(est, x1))


def _scalar(est: SfmEstimator, c: Contrast, kind: str) -> float:
    vec = effect_vectors(est, c.x0, c.x1)[kind]
    return float(vec[est.state_index(est.roles.y, c.y)])


# ---------------------------------------------------------------------------
# public scalar API


def total_variation(est: SfmEstimator, c: Contrast) -> float:
    """P(y | x1) - P(y | x0)."""
    return _scalar(est, c, "tv")


def total_effect(est: SfmEstimator, c: Contrast) -> float:
    """Confounder-adjusted difference sum_z [P(y|x1,z) - P(y|x0,z)] P(z)."""
    return _scalar(est, c, "te")


def spurious_effect(est: SfmEstimator, c: Contrast) -> float:
    return _scalar(est, c, "se")


def direct_effect(est: SfmEstimator, c: Contrast) -> float:
    """sum_{z,w} [P(y|x1,z,w) - P(y|x0,z,w)] P(w|x0,z) P(z)."""
    return _scalar(est, c, "de")


def indirect_effect(est: SfmEstimator, c: Contrast, reversed: bool = False) -> float:
    """sum_{z,w} P(y|x0,z,w) [P(w|x1,z) - P(w|x0,z)] P(z), or IE_{x1,x0} when ``reversed``."""
    return _scalar(est, c, "ie_rev" if reversed else "ie")


def ledger_from_vectors(
    est: SfmEstimator, c: Contrast, vectors: dict[str, np.ndarray], y_weights: np.ndarray | None = None
) -> EffectLedger:
    if y_weights is None:
        y_weights = np.zeros(effect_terms(est).n_y)
        y_weights[est.state_index(est.roles.y, c.y)] = 1.0
    v = {k: float(np.dot(y_weights, vec)) for k, vec in vectors.items()}
    ledger = EffectLedger(
        tv=v["tv"],
        te=v["te"],
        se=v["tv"] - v["te"],
        de=v["de"],
        ie=v["ie"],
        ie_reversed=v["ie_rev"],
        contrast=c,
        metadata=_metadata(est),
    )
    ledger.check()
    return ledger


def effect_ledger(est: SfmEstimator, c: Contrast) -> EffectLedger:
    """All descriptors for ``c``; raises :class:`IdentityError` on a residual breach."""
    if c.y is None:
        raise ConfigError("contrast needs a target state y")
    return ledger_from_vectors(est, c, effect_vectors(est, c.x0, c.x1))


def _metadata(est: SfmEstimator) -> dict[str, Any]:
    return {
        "n_rows": est.n_rows,
        "alpha": est.alpha,
        "roles_digest": est.roles.digest(),
    }


def y_indicator(est: SfmEstimator, y: Any) -> np.ndarray:
    vec = np.zeros(effect_terms(est).n_y)
    vec[est.state_index(est.roles.y, y)] = 1.0
    return vec


def resolve_kinds(kinds: Sequence[str]) -> tuple[str, ...]:
    bad = [k for k in kinds if k not in KINDS]
    if bad:
        raise ConfigError(f"unknown effect kinds {bad}; expected a subset of {KINDS}")
    return tuple(kinds)
