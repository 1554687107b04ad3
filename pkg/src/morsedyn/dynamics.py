"""Combinatorial multivalued maps on grid leaves.

:func:`build_outer_map` turns any box-image function into a directed graph on
the leaves of a grid: ``i -> j`` whenever the (domain-clipped) image box of
leaf ``i`` meets the closed box of leaf ``j``.  Touching counts, which keeps
the graph an outer approximation when images are exact enclosures.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from morsedyn.errors import ValidationError
from morsedyn.grid import Box, CellId, Grid

__all__ = [
    "MultivaluedMap",
    "CoverageReport",
    "build_outer_map",
    "validate_outer",
    "validate_pairs",
]

BoxImage = Callable[[Box], "Box | tuple"]


@dataclass(frozen=True)
class MultivaluedMap:
    cells: tuple[CellId, ...]
    adjacency: tuple[tuple[int, ...], ...]
    clipped: tuple[bool, ...]

    def __post_init__(self) -> None:
        n = len(self.cells)
        if len(self.adjacency) != n or len(self.clipped) != n:
            raise ValidationError("adjacency/clipped length must match cell count")
        for src, targets in enumerate(self.adjacency):
            if list(targets) != sorted(set(targets)):
                raise ValidationError(f"adjacency of cell {src} is not sorted and duplicate-free")
            if targets and (targets[0] < 0 or targets[-1] >= n):
                raise ValidationError(f"adjacency of cell {src} has out-of-range targets")

    def __len__(self) -> int:
        return len(self.cells)

    def edges(self) -> list[tuple[int, int]]:
        return [(s, t) for s, targets in enumerate(self.adjacency) for t in targets]

    @property
    def edge_count(self) -> int:
        return sum(len(t) for t in self.adjacency)

    def clipped_cells(self) -> list[int]:
        return [i for i, c in enumerate(self.clipped) if c]

    def to_dict(self) -> dict:
        return {
            "cells": len(self.cells),
            "edges": [list(e) for e in self.edges()],
            "clipped": self.clipped_cells(),
        }

    @classmethod
    def from_dict(cls, data: dict, grid: Grid) -> "MultivaluedMap":
        n = int(data["cells"])
        if n != len(grid):
            raise ValidationError(f"map has {n} cells, grid has {len(grid)}")
        adj: list[list[int]] = [[] for _ in range(n)]
        for s, t in data["edges"]:
            adj[s].append(t)
        clipped = [False] * n
        for i in data["clipped"]:
            clipped[i] = True
        return cls(tuple(grid.leaves()), tuple(tuple(sorted(a)) for a in adj), tuple(clipped))

    def edges_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src", "dst"])
        w.writerows(self.edges())
        return buf.getvalue()


def _as_box(result, dim: int) -> Box:
    if isinstance(result, Box):
        box = result
    else:
        lo, hi = result
        lo, hi = np.atleast_1d(np.asarray(lo, dtype=float)), np.atleast_1d(np.asarray(hi, dtype=float))
        if np.any(lo > hi):
            raise ValidationError(f"box image has lower > upper: {lo} / {hi}")
        box = Box.from_arrays(lo, hi)
    if box.dim != dim:
        raise ValidationError(f"box image has dimension {box.dim}, expected {dim}")
    return box


def build_outer_map(grid: Grid, box_image: BoxImage, threads: int = 1) -> MultivaluedMap:
    """Outer approximation of the map whose cell images ``box_image`` encloses.

    ``box_image`` may return a :class:`Box` or a ``(lower, upper)`` pair.
    Images are clipped to the domain; cells whose image left the domain are
    flagged.  With ``threads > 1`` cells are processed concurrently, but the
    result does not depend on the schedule.
    """
    leaves = grid.leaves()

    def one(cell: CellId) -> tuple[tuple[int, ...], bool]:
        box = _as_box(box_image(grid.cell_bounds(cell)), grid.dim)
        clipped = not grid.domain.contains_box(box)
        inside = box.clip(grid.domain)
        if inside is None:
            return (), True
        return tuple(grid.leaves_meeting(inside)), clipped

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, leaves))
    else:
        results = [one(c) for c in leaves]
    return MultivaluedMap(
        cells=tuple(leaves),
        adjacency=tuple(r[0] for r in results),
        clipped=tuple(r[1] for r in results),
    )


@dataclass
class CoverageReport:
    """Empirical check of the outer-approximation property."""

    n_samples: int
    violations: int
    out_of_domain: int
    unflagged_out_of_domain: int
    cell_coverage: np.ndarray = field(repr=False)
    violating_cells: list[int] = field(default_factory=list)

    @property
    def violation_fraction(self) -> float:
        checked = self.n_samples - self.out_of_domain
        return self.violations / checked if checked else 0.0

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "violations": self.violations,
            "violation_fraction": self.violation_fraction,
            "out_of_domain": self.out_of_domain,
            "unflagged_out_of_domain": self.unflagged_out_of_domain,
            "violating_cells": self.violating_cells,
            "min_cell_coverage": float(self.cell_coverage.min()) if len(self.cell_coverage) else 1.0,
        }


def _check(
    fmap: MultivaluedMap,
    grid: Grid,
    src: np.ndarray,
    images: np.ndarray,
) -> CoverageReport:
    n = len(fmap)
    dst = grid.locate_positions(images)
    outside = dst < 0
    adj_sets = [set(a) for a in fmap.adjacency]
    hit = np.array(
        [d in adj_sets[s] if d >= 0 else True for s, d in zip(src.tolist(), dst.tolist())],
        dtype=bool,
    )
    bad = ~hit
    checked = np.bincount(src[~outside], minlength=n)
    good = np.bincount(src[~outside & hit], minlength=n)
    with np.errstate(invalid="ignore", divide="ignore"):
        cov = np.where(checked > 0, good / np.maximum(checked, 1), 1.0)
    clipped = np.asarray(fmap.clipped, dtype=bool)
    return CoverageReport(
        n_samples=len(src),
        violations=int(bad.sum()),
        out_of_domain=int(outside.sum()),
        unflagged_out_of_domain=int(np.sum(outside & ~clipped[src])),
        cell_coverage=cov,
        violating_cells=sorted(set(src[bad].tolist())),
    )


def validate_outer(
    fmap: MultivaluedMap,
    grid: Grid,
    point_map: Callable[[np.ndarray], np.ndarray],
    n_samples: int,
    seed: int = 0,
) -> CoverageReport:
    """Sample ``n_samples`` uniform points per cell and check each image lands in an adjacent cell.

    ``point_map`` takes an ``(m, d)`` array and returns the ``(m, d)`` images.
    Images outside the domain are counted separately and reconciled against
    the clipped flags.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be positive")
    if tuple(fmap.cells) != tuple(grid.leaves()):
        raise ValidationError("map was not built on this grid")
    lo, hi = grid.bounds_arrays()
    rng = np.random.default_rng(seed)
    u = rng.random((len(grid), n_samples, grid.dim))
    pts = (lo[:, None, :] + u * (hi - lo)[:, None, :]).reshape(-1, grid.dim)
    src = np.repeat(np.arange(len(grid)), n_samples)
    images = np.asarray(point_map(pts), dtype=float).reshape(pts.shape)
    return _check(fmap, grid, src, images)


def validate_pairs(
    fmap: MultivaluedMap, grid: Grid, inputs: Sequence, outputs: Sequence
) -> CoverageReport:
    """Same check as :func:`validate_outer`, on observed ``(x, f(x))`` pairs.

    Pairs whose input lies outside the domain are ignored.
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.atleast_2d(np.asarray(outputs, dtype=float))
    src = grid.locate_positions(x)
    keep = src >= 0
    return _check(fmap, grid, src[keep], y[keep])
