"""Sankey-style flow data for the TV decomposition."""

from __future__ import annotations

from collections.abc import Mapping
from typing import Any

from ..decomposition import ConfounderDecomposition, MediatorDecomposition
from ..effects import EffectLedger


def _sign(v: float) -> int:
    return (v > 0) - (v < 0)


def sankey_export(
    ledger: EffectLedger,
    mediators: MediatorDecomposition | None = None,
    confounders: ConfounderDecomposition | None = None,
) -> dict[str, Any]:
    """Nodes and signed links for TV -> {TE, SE}, TE -> {DE, IE_{x1,x0}} and the leaf components.

    Every link carries the magnitude and sign of the descriptor it points to.
    IE_{x1,x0} enters TE with a minus sign (te = de - ie), which the link
    records as ``"combine": -1``. A flow diagram is only meaningful when every
    descriptor has the same sign; ``renderable_as_flow`` records that.
    """
    nodes = [
        {"id": "tv", "label": "TV"},
        {"id": "te", "label": "TE"},
        {"id": "se", "label": "SE"},
        {"id": "de", "label": "DE"},
        {"id": "ie", "label": "IE_rev"},
    ]
    links: list[dict[str, Any]] = []

    def link(src: str, dst: str, value: float, combine: int = 1) -> None:
        links.append({"source": src, "target": dst, "value": abs(value), "sign": _sign(value), "combine": combine})

    link("tv", "te", ledger.te)
    link("tv", "se", ledger.se)
    link("te", "de", ledger.de)
    link("te", "ie", ledger.ie_reversed, combine=-1)
    leaves: list[tuple[str, str, Mapping[str, float]]] = []
    if mediators is not None:
        leaves.append(("ie", "ie:", mediators.components))
    if confounders is not None:
        leaves.append(("se", "se:", confounders.components))
    for parent, prefix, comps in leaves:
        for name, value in comps.items():
            nodes.append({"id": prefix + name, "label": f"{parent.upper()}[{name}]"})
            link(parent, prefix + name, value)
    signs = {lk["sign"] for lk in links if lk["sign"] != 0}
    return {"nodes": nodes, "links": links, "renderable_as_flow": len(signs) <= 1}
