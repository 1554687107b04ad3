"""Adaptive refinement loop: build the map, find the Morse sets, refine them, repeat."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

from morsedyn.dynamics import BoxImage, MultivaluedMap, build_outer_map
from morsedyn.errors import CapacityError, ValidationError
from morsedyn.grid import CellId, Grid
from morsedyn.morse import (
    BasinLabels,
    Condensation,
    MorseGraph,
    Retraction,
    basins,
    condensation,
    morse_graph,
    order_retraction,
)

__all__ = ["RoundStats", "PipelineResult", "adaptive_morse_pipeline", "refine_morse_cells"]

log = logging.getLogger(__name__)

RefineRule = Callable[[Grid, MultivaluedMap, Condensation, MorseGraph], "list[CellId]"]


def refine_morse_cells(
    grid: Grid, fmap: MultivaluedMap, cond: Condensation, mg: MorseGraph
) -> list[CellId]:
    """Every cell belonging to some Morse node."""
    return [fmap.cells[c] for cells in mg.cells for c in cells]


@dataclass(frozen=True)
class RoundStats:
    depth: int
    leaves: int
    edges: int
    morse_nodes: int
    morse_cells: int
    morse_volume: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class PipelineResult:
    grid: Grid
    map: MultivaluedMap
    condensation: Condensation
    morse_graph: MorseGraph
    retraction: Retraction | None
    truncated: bool = False
    history: list[RoundStats] = field(default_factory=list)

    @property
    def basins(self) -> BasinLabels | None:
        if self.retraction is None:
            return None
        return basins(self.condensation, self.retraction, self.morse_graph)


def adaptive_morse_pipeline(
    grid: Grid,
    box_image: BoxImage,
    max_depth: int,
    refine_rule: RefineRule = refine_morse_cells,
    threads: int = 1,
) -> PipelineResult:
    """Refine the cells chosen by ``refine_rule`` until none is shallower than ``max_depth``.

    ``max_depth`` bounds the largest per-axis depth of any refined cell.  If a
    refinement would exceed the grid's leaf cap the loop stops at the last
    completed level and the result is flagged ``truncated``.
    """
    if max_depth < grid.max_depth():
        raise ValidationError(f"max_depth {max_depth} is below the grid's depth {grid.max_depth()}")
    history: list[RoundStats] = []
    truncated = False
    while True:
        fmap = build_outer_map(grid, box_image, threads=threads)
        cond = condensation(fmap)
        mg = morse_graph(cond)
        vols = grid.volumes()
        morse = [c for cells in mg.cells for c in cells]
        history.append(
            RoundStats(
                depth=grid.max_depth(),
                leaves=len(grid),
                edges=fmap.edge_count,
                morse_nodes=len(mg),
                morse_cells=len(morse),
                morse_volume=float(vols[morse].sum()) if morse else 0.0,
            )
        )
        log.info("depth %d: %d leaves, %d Morse nodes", grid.max_depth(), len(grid), len(mg))
        todo = [c for c in refine_rule(grid, fmap, cond, mg) if max(c.depth) < max_depth]
        if not todo:
            break
        try:
            grid = grid.refine(todo)
        except CapacityError as exc:
            log.warning("stopping refinement early: %s", exc)
            truncated = True
            break
    return PipelineResult(
        grid=grid,
        map=fmap,
        condensation=cond,
        morse_graph=mg,
        retraction=order_retraction(cond, mg),
        truncated=truncated,
        history=history,
    )
