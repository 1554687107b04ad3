"""Analytic test systems with exact cell images.

These exercise the whole graph pipeline without any training.  Box images
are exact ranges of the map over the cell, computed from endpoint values
plus interior critical points, so the resulting multivalued maps are true
outer approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from morsedyn.errors import ValidationError
from morsedyn.grid import Box

__all__ = ["System", "SYSTEMS", "get_system", "contraction", "double_well", "saddle"]

STEP = 0.2
_CRIT = math.sqrt(0.75)  # where d/dx [x - 0.8 x (x^2 - 1)] vanishes


@dataclass(frozen=True)
class System:
    name: str
    domain: Box
    point_map: Callable[[np.ndarray], np.ndarray]
    box_image: Callable[[Box], Box]
    description: str = ""


def _half(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float) / 2.0


def _half_box(cell: Box) -> Box:
    return Box(tuple(v / 2.0 for v in cell.lower), tuple(v / 2.0 for v in cell.upper))


def double_well_step(x):
    """Gradient step ``x - h V'(x)`` for ``V(x) = (x^2 - 1)^2`` with ``h = 0.2``."""
    return x - STEP * 4.0 * x * (x * x - 1.0)


def _dw_range(a: float, b: float) -> tuple[float, float]:
    vals = [double_well_step(a), double_well_step(b)]
    vals += [double_well_step(c) for c in (-_CRIT, _CRIT) if a < c < b]
    return min(vals), max(vals)


def _dw_map(x: np.ndarray) -> np.ndarray:
    return double_well_step(np.asarray(x, dtype=float))


def _dw_box(cell: Box) -> Box:
    lo, hi = zip(*(_dw_range(a, b) for a, b in zip(cell.lower, cell.upper)))
    return Box(lo, hi)


def _saddle_map(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.column_stack([double_well_step(x[:, 0]), x[:, 1] / 2.0])


def _saddle_box(cell: Box) -> Box:
    a, b = _dw_range(cell.lower[0], cell.upper[0])
    return Box((a, cell.lower[1] / 2.0), (b, cell.upper[1] / 2.0))


contraction = System(
    "contraction",
    Box((-1.0,), (1.0,)),
    _half,
    _half_box,
    "x -> x/2 on [-1, 1]: a single global attractor at 0",
)
double_well = System(
    "double-well",
    Box((-1.6,), (1.6,)),
    _dw_map,
    _dw_box,
    "x -> x - 0.2 V'(x), V = (x^2 - 1)^2 on [-1.6, 1.6]: sinks at +-1, source at 0",
)
saddle = System(
    "saddle",
    Box((-1.6, -1.0), (1.6, 1.0)),
    _saddle_map,
    _saddle_box,
    "double-well x contraction on [-1.6, 1.6] x [-1, 1]: sinks at (+-1, 0), saddle at origin",
)

SYSTEMS = {s.name: s for s in (contraction, double_well, saddle)}


def get_system(name: str) -> System:
    try:
        return SYSTEMS[name]
    except KeyError:
        raise ValidationError(f"unknown system {name!r}; choose from {sorted(SYSTEMS)}") from None
