"""Serialisation of Morse analysis results: JSON artifact, Graphviz DOT, basin CSV.

The JSON artifact is self-contained so DOT and CSV can be regenerated from it
alone.  All writers are deterministic: same input, same bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

from morsedyn.errors import ValidationError
from morsedyn.morse import Condensation, MorseGraph, Retraction

__all__ = ["MorseArtifact", "dumps_json", "to_dot", "to_json", "to_csv", "render", "load_artifact"]

FORMATS = ("dot", "json", "csv")


def dumps_json(data, compact: bool = False) -> str:
    if compact:
        return json.dumps(data, separators=(",", ":")) + "\n"
    return json.dumps(data, indent=2) + "\n"


@dataclass(frozen=True)
class MorseArtifact:
    """Morse graph plus what is needed to label every cell."""

    nodes: tuple[tuple[int, ...], ...]  # cells per Morse node
    order_edges: tuple[tuple[int, int], ...]  # covering pairs (q, p) with p < q
    component_of: tuple[int, ...]  # condensation component per cell
    node_components: tuple[int, ...]  # component of each Morse node
    retraction: tuple[int, ...] | None  # Morse node per component

    def __post_init__(self) -> None:
        n = len(self.nodes)
        if len(self.node_components) != n:
            raise ValidationError("node_components must list one component per node")
        for q, p in self.order_edges:
            if not (0 <= p < n and 0 <= q < n) or p == q:
                raise ValidationError(f"bad order edge {(q, p)}")
        n_comp = max(self.component_of, default=-1) + 1
        if self.retraction is not None:
            if len(self.retraction) != n_comp:
                raise ValidationError("retraction must assign every component")
            if any(not 0 <= m < n for m in self.retraction):
                raise ValidationError("retraction refers to an unknown node")

    @classmethod
    def from_analysis(
        cls, cond: Condensation, mg: MorseGraph, retraction: Retraction | None
    ) -> "MorseArtifact":
        return cls(
            nodes=mg.cells,
            order_edges=tuple(mg.covering_edges()),
            component_of=cond.comp_of,
            node_components=mg.components,
            retraction=None if retraction is None else retraction.assignment,
        )

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def below(self) -> list[set[int]]:
        """Strict down-sets recovered from the covering edges."""
        children: list[list[int]] = [[] for _ in self.nodes]
        for q, p in self.order_edges:
            children[q].append(p)
        out: list[set[int] | None] = [None] * len(self.nodes)

        def down(q: int) -> set[int]:
            if out[q] is None:
                acc: set[int] = set()
                for p in children[q]:
                    acc |= {p} | down(p)
                out[q] = acc
            return out[q]

        return [down(q) for q in range(len(self.nodes))]

    @property
    def minimal(self) -> list[bool]:
        return [not b for b in self.below]

    @property
    def heights(self) -> list[int]:
        children: list[list[int]] = [[] for _ in self.nodes]
        for q, p in self.order_edges:
            children[q].append(p)
        h: dict[int, int] = {}

        def height(q: int) -> int:
            if q not in h:
                h[q] = 1 + max((height(p) for p in children[q]), default=-1)
            return h[q]

        return [height(q) for q in range(len(self.nodes))]

    def basin_rows(self) -> list[tuple[int, str, str]]:
        """``(cell, node, role)``; without a retraction, transient cells are ``unassigned``."""
        node_of_comp = {c: k for k, c in enumerate(self.node_components)}
        minimal = self.minimal
        rows = []
        for cell, comp in enumerate(self.component_of):
            if comp in node_of_comp:
                rows.append((cell, str(node_of_comp[comp]), "morse"))
            elif self.retraction is None:
                rows.append((cell, "", "unassigned"))
            else:
                k = self.retraction[comp]
                rows.append((cell, str(k), "basin" if minimal[k] else "separatrix"))
        return rows

    def to_dict(self) -> dict:
        minimal, heights = self.minimal, self.heights
        return {
            "nodes": [
                {
                    "id": k,
                    "cells": list(cells),
                    "minimal": minimal[k],
                    "height": heights[k],
                    "component": self.node_components[k],
                }
                for k, cells in enumerate(self.nodes)
            ],
            "order_edges": [list(e) for e in self.order_edges],
            "components": {
                "cell_component": list(self.component_of),
                "retraction": None if self.retraction is None else list(self.retraction),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MorseArtifact":
        try:
            nodes = sorted(data["nodes"], key=lambda n: n["id"])
            if [n["id"] for n in nodes] != list(range(len(nodes))):
                raise ValidationError("node ids must be 0..n-1")
            comps = data["components"]
            retr = comps["retraction"]
            return cls(
                nodes=tuple(tuple(int(c) for c in n["cells"]) for n in nodes),
                order_edges=tuple((int(q), int(p)) for q, p in data["order_edges"]),
                component_of=tuple(int(c) for c in comps["cell_component"]),
                node_components=tuple(int(n["component"]) for n in nodes),
                retraction=None if retr is None else tuple(int(m) for m in retr),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"malformed Morse artifact: {exc!r}") from None


def to_json(art: MorseArtifact) -> str:
    return dumps_json(art.to_dict())


def to_dot(art: MorseArtifact) -> str:
    """Hasse diagram, edges from higher to lower node, one rank per height."""
    minimal, heights = art.minimal, art.heights
    lines = ["digraph morse {", "  rankdir=TB;", '  node [shape=box, fontname="Helvetica"];']
    for k, cells in enumerate(art.nodes):
        tag = "\\nminimal" if minimal[k] else ""
        unit = "cell" if len(cells) == 1 else "cells"
        lines.append(f'  n{k} [label="M{k}\\n{len(cells)} {unit}{tag}"];')
    for h in sorted(set(heights), reverse=True):
        same = " ".join(f"n{k};" for k in range(len(art)) if heights[k] == h)
        lines.append(f"  {{ rank=same; {same} }}")
    for q, p in art.order_edges:
        lines.append(f"  n{q} -> n{p};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_csv(art: MorseArtifact) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["cell", "node", "role"])
    w.writerows(art.basin_rows())
    return buf.getvalue()


def render(art: MorseArtifact, fmt: str) -> str:
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
    return {"dot": to_dot, "json": to_json, "csv": to_csv}[fmt](art)


def load_artifact(path: str | Path) -> MorseArtifact:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such artifact: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return MorseArtifact.from_dict(data)
