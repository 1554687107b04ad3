"""Multiscale cubical decomposition of a rectangular parameter region.

A :class:`Grid` is a forest of 2^d-trees whose roots form a uniform grid at
``initial_depth``.  Leaves tile the domain.  Membership is half-open,
``[lo, hi)`` on every axis, except that the domain's maximal face is closed,
so every point of the closed domain belongs to exactly one leaf.

Leaves are kept in a canonical depth-first order: roots lexicographically by
index, and a refined cell's children take its place, themselves ordered
lexicographically by their bisection bits.  Downstream graph code indexes
cells by their position in this list.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from morsedyn.errors import CapacityError, OutOfDomainError, UnknownCellError, ValidationError

DEFAULT_LEAF_CAP = 2**20
MAX_DIM = 8

__all__ = [
    "Box",
    "CellId",
    "Grid",
    "make_grid",
    "DEFAULT_LEAF_CAP",
]


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box ``[lower, upper]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValidationError(f"box bounds differ in dimension: {len(lo)} vs {len(hi)}")
        if len(lo) == 0:
            raise ValidationError("box must have dimension >= 1")
        if any(not (math.isfinite(a) and math.isfinite(b)) for a, b in zip(lo, hi)):
            raise ValidationError("box bounds must be finite")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValidationError(f"box has lower > upper: {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_arrays(cls, lower: Iterable[float], upper: Iterable[float]) -> "Box":
        return cls(tuple(lower), tuple(upper))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.lower) + np.asarray(self.upper))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def is_degenerate(self) -> bool:
        return any(a >= b for a, b in zip(self.lower, self.upper))

    def contains(self, point: Sequence[float]) -> bool:
        """Closed containment."""
        return all(a <= p <= b for a, p, b in zip(self.lower, point, self.upper))

    def contains_box(self, other: "Box") -> bool:
        return all(
            a <= c and d <= b
            for a, b, c, d in zip(self.lower, self.upper, other.lower, other.upper)
        )

    def meets(self, other: "Box") -> bool:
        """Closed intersection test; touching faces count."""
        return all(
            a <= d and c <= b
            for a, b, c, d in zip(self.lower, self.upper, other.lower, other.upper)
        )

    def clip(self, other: "Box") -> "Box | None":
        """Intersection with ``other`` or ``None`` if they are disjoint."""
        lo = tuple(max(a, c) for a, c in zip(self.lower, other.lower))
        hi = tuple(min(b, d) for b, d in zip(self.upper, other.upper))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return Box(lo, hi)

    def inflate(self, rel: float) -> "Box":
        pad = rel * self.extent
        return Box.from_arrays(np.asarray(self.lower) - pad, np.asarray(self.upper) + pad)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, data: dict) -> "Box":
        return cls(tuple(data["lower"]), tuple(data["upper"]))


class CellId(NamedTuple):
    depth: tuple[int, ...]
    index: tuple[int, ...]


def _validate_domain(domain: Box) -> None:
    if domain.dim > MAX_DIM:
        raise ValidationError(f"dimension {domain.dim} exceeds supported maximum {MAX_DIM}")
    if domain.is_degenerate():
        raise ValidationError("domain box must have positive extent on every axis")


class Grid:
    """Immutable adaptive cubical grid.  Build with :func:`make_grid`."""

    def __init__(
        self,
        domain: Box,
        initial_depth: tuple[int, ...],
        by_depth: dict[tuple[int, ...], frozenset[tuple[int, ...]]],
        internal: frozenset[CellId],
        leaf_cap: int,
    ) -> None:
        self.domain = domain
        self.initial_depth = initial_depth
        self.leaf_cap = leaf_cap
        self._by_depth = by_depth
        self._internal = internal
        self._lo = np.asarray(domain.lower)
        self._hi = np.asarray(domain.upper)
        self._ext = self._hi - self._lo
        self._leaves = sorted(
            (CellId(d, i) for d, idx in by_depth.items() for i in idx), key=self._order_key
        )
        self._position = {c: k for k, c in enumerate(self._leaves)}
        self._corners: tuple[np.ndarray, np.ndarray] | None = None

    # ------------------------------------------------------------------ order
    def _level(self, cell: CellId) -> int:
        return cell.depth[0] - self.initial_depth[0]

    def _order_key(self, cell: CellId) -> tuple:
        r = self._level(cell)
        root = tuple(i >> r for i in cell.index)
        bits = tuple(tuple((i >> (r - l)) & 1 for i in cell.index) for l in range(1, r + 1))
        return (root,) + bits

    # ------------------------------------------------------------- accessors
    @property
    def dim(self) -> int:
        return self.domain.dim

    def __len__(self) -> int:
        return len(self._leaves)

    def __contains__(self, cell: CellId) -> bool:
        return cell in self._position

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.domain == other.domain
            and self.initial_depth == other.initial_depth
            and self._leaves == other._leaves
        )

    def __repr__(self) -> str:
        return f"Grid(dim={self.dim}, leaves={len(self)}, domain={self.domain})"

    def leaves(self) -> list[CellId]:
        """Leaves in canonical order."""
        return list(self._leaves)

    def position(self, cell: CellId) -> int:
        try:
            return self._position[cell]
        except KeyError:
            raise UnknownCellError(cell) from None

    def max_depth(self) -> int:
        return max(max(c.depth) for c in self._leaves)

    # ------------------------------------------------------------ geometry
    def _axis_bound(self, axis: int, depth: int, i: int) -> float:
        n = 1 << depth
        if i >= n:
            return float(self._hi[axis])
        return float(self._lo[axis] + self._ext[axis] * (i / n))

    def _bounds(self, depth: Sequence[int], index: Sequence[int]) -> Box:
        lo = tuple(self._axis_bound(a, k, i) for a, (k, i) in enumerate(zip(depth, index)))
        hi = tuple(self._axis_bound(a, k, i + 1) for a, (k, i) in enumerate(zip(depth, index)))
        return Box(lo, hi)

    def cell_bounds(self, cell: CellId) -> Box:
        if cell not in self._position:
            raise UnknownCellError(cell)
        return self._bounds(cell.depth, cell.index)

    def _corner_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if self._corners is None:
            boxes = [self._bounds(c.depth, c.index) for c in self._leaves]
            lo = np.array([b.lower for b in boxes], dtype=float)
            hi = np.array([b.upper for b in boxes], dtype=float)
            lo.flags.writeable = hi.flags.writeable = False
            self._corners = (lo, hi)
        return self._corners

    def bounds_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of every leaf, shape ``(n_leaves, d)``."""
        lo, hi = self._corner_arrays()
        return lo.copy(), hi.copy()

    def volumes(self) -> np.ndarray:
        lo, hi = self.bounds_arrays()
        return np.prod(hi - lo, axis=1)

    def _axis_index(self, axis: int, depth: int, p: float) -> int:
        n = 1 << depth
        i = int(math.floor((p - self._lo[axis]) / self._ext[axis] * n))
        i = min(max(i, 0), n - 1)
        # Snap against the exact bound formula so locate and cell_bounds agree.
        if i > 0 and p < self._axis_bound(axis, depth, i):
            i -= 1
        elif i < n - 1 and p >= self._axis_bound(axis, depth, i + 1):
            i += 1
        return i

    def locate(self, point: Sequence[float]) -> CellId:
        """Leaf containing ``point`` under the half-open convention."""
        p = [float(v) for v in point]
        if len(p) != self.dim:
            raise ValidationError(f"point has dimension {len(p)}, grid has {self.dim}")
        if not self.domain.contains(p):
            raise OutOfDomainError(f"point {p} outside domain {self.domain}")
        for depth, members in self._by_depth.items():
            idx = tuple(self._axis_index(a, k, v) for a, (k, v) in enumerate(zip(depth, p)))
            if idx in members:
                return CellId(depth, idx)
        raise AssertionError("leaves do not cover the domain")  # pragma: no cover

    def locate_positions(self, points: np.ndarray) -> np.ndarray:
        """Vectorised :meth:`locate` returning leaf positions; -1 marks out-of-domain points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), -1, dtype=np.int64)
        inside = np.all((pts >= self._lo) & (pts <= self._hi), axis=1)
        for k in np.flatnonzero(inside):
            out[k] = self._position[self.locate(pts[k])]
        return out

    def leaves_meeting(self, box: Box) -> list[int]:
        """Positions of leaves whose closed box meets the closed ``box``, sorted."""
        if box.dim != self.dim:
            raise ValidationError("box dimension does not match grid")
        if not self.domain.meets(box):
            return []
        lo, hi = self._corner_arrays()
        hit = np.all((lo <= np.asarray(box.upper)) & (hi >= np.asarray(box.lower)), axis=1)
        return np.flatnonzero(hit).tolist()

    # ----------------------------------------------------------- refinement
    def refine(self, cells: Iterable[CellId]) -> "Grid":
        """New grid with each listed leaf bisected on every axis."""
        targets = set(cells)
        for c in targets:
            if c not in self._position:
                raise ValidationError(f"cannot refine non-leaf cell {c}")
        if not targets:
            return self
        n_new = len(self) + len(targets) * ((1 << self.dim) - 1)
        if n_new > self.leaf_cap:
            raise CapacityError(f"refinement would create {n_new} leaves (cap {self.leaf_cap})")
        by_depth = {d: set(m) for d, m in self._by_depth.items()}
        internal = set(self._internal)
        for c in targets:
            by_depth[c.depth].discard(c.index)
            internal.add(c)
            for child in _children(c):
                by_depth.setdefault(child.depth, set()).add(child.index)
        return Grid(
            self.domain,
            self.initial_depth,
            {d: frozenset(m) for d, m in sorted(by_depth.items()) if m},
            frozenset(internal),
            self.leaf_cap,
        )

    # -------------------------------------------------------- serialisation
    def to_dict(self) -> dict:
        return {
            "domain": self.domain.to_dict(),
            "initial_depth": list(self.initial_depth),
            "leaves": [{"depth": list(c.depth), "index": list(c.index)} for c in self._leaves],
        }

    @classmethod
    def from_dict(cls, data: dict, leaf_cap: int = DEFAULT_LEAF_CAP) -> "Grid":
        domain = Box.from_dict(data["domain"])
        _validate_domain(domain)
        cells = [CellId(tuple(c["depth"]), tuple(c["index"])) for c in data["leaves"]]
        if not cells:
            raise ValidationError("grid has no leaves")
        if "initial_depth" in data:
            initial = tuple(int(k) for k in data["initial_depth"])
        else:
            initial = min(c.depth for c in cells)
        by_depth: dict[tuple[int, ...], set[tuple[int, ...]]] = {}
        internal: set[CellId] = set()
        for c in cells:
            r = c.depth[0] - initial[0]
            if len(c.depth) != domain.dim or any(k - k0 != r for k, k0 in zip(c.depth, initial)):
                raise ValidationError(f"cell {c} inconsistent with initial depth {initial}")
            if any(i < 0 or i >= (1 << k) for k, i in zip(c.depth, c.index)):
                raise ValidationError(f"cell {c} index out of range")
            by_depth.setdefault(c.depth, set()).add(c.index)
            for s in range(1, r + 1):
                internal.add(
                    CellId(tuple(k - s for k in c.depth), tuple(i >> s for i in c.index))
                )
        grid = cls(
            domain,
            initial,
            {d: frozenset(m) for d, m in sorted(by_depth.items())},
            frozenset(internal),
            leaf_cap,
        )
        if not math.isclose(float(grid.volumes().sum()), domain.volume, rel_tol=1e-12):
            raise ValidationError("leaves do not tile the domain")
        return grid


def _children(cell: CellId) -> list[CellId]:
    depth = tuple(k + 1 for k in cell.depth)
    return [
        CellId(depth, tuple(2 * i + b for i, b in zip(cell.index, bits)))
        for bits in itertools.product((0, 1), repeat=len(cell.index))
    ]


def make_grid(
    domain: Box,
    initial_depth: int | Sequence[int],
    leaf_cap: int = DEFAULT_LEAF_CAP,
) -> Grid:
    """Uniform grid with ``2**initial_depth[i]`` cells along axis ``i``."""
    _validate_domain(domain)
    if isinstance(initial_depth, (int, np.integer)):
        depth = (int(initial_depth),) * domain.dim
    else:
        depth = tuple(int(k) for k in initial_depth)
    if len(depth) != domain.dim:
        raise ValidationError(f"initial_depth has {len(depth)} entries for a {domain.dim}-d domain")
    if any(k < 0 for k in depth):
        raise ValidationError("initial_depth must be non-negative")
    if leaf_cap < 1:
        raise ValidationError("leaf_cap must be positive")
    n = 1 << sum(depth)
    if n > leaf_cap:
        raise CapacityError(f"uniform grid would have {n} leaves (cap {leaf_cap})")
    idx = frozenset(itertools.product(*(range(1 << k) for k in depth)))
    return Grid(domain, depth, {depth: idx}, frozenset(), leaf_cap)
