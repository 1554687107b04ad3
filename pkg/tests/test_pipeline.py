import numpy as np
import pytest

from morsedyn.dynamics import build_outer_map
from morsedyn.errors import ValidationError
from morsedyn.grid import make_grid
from morsedyn.morse import condensation, morse_graph, order_retraction
from morsedyn.pipeline import adaptive_morse_pipeline
from morsedyn.systems import contraction, double_well, saddle


def test_contraction_volume_shrinks():
    res = adaptive_morse_pipeline(make_grid(contraction.domain, 2), contraction.box_image, 5)
    vols = [h.morse_volume for h in res.history]
    assert len(vols) == 4
    assert all(b < a for a, b in zip(vols, vols[1:]))


def test_single_pass_matches_manual_steps():
    g = make_grid(double_well.domain, 4)
    res = adaptive_morse_pipeline(g, double_well.box_image, 4)
    fmap = build_outer_map(g, double_well.box_image)
    cond = condensation(fmap)
    mg = morse_graph(cond)
    assert res.grid == g
    assert res.map == fmap
    assert res.morse_graph == mg
    assert res.retraction == order_retraction(cond, mg)
    assert len(res.history) == 1


def test_non_morse_cells_stay_coarse():
    res = adaptive_morse_pipeline(make_grid(double_well.domain, 2), double_well.box_image, 6)
    morse = {c for cells in res.morse_graph.cells for c in cells}
    depths = [max(c.depth) for c in res.grid.leaves()]
    assert all(depths[c] == 6 for c in morse)
    assert min(depths) < 6


def test_truncation_flag():
    g = make_grid(saddle.domain, 2, leaf_cap=40)
    res = adaptive_morse_pipeline(g, saddle.box_image, 8)
    assert res.truncated
    assert len(res.grid) <= 40


def test_max_depth_below_grid_rejected():
    with pytest.raises(ValidationError):
        adaptive_morse_pipeline(make_grid(contraction.domain, 4), contraction.box_image, 3)


def test_deterministic_with_threads():
    a = adaptive_morse_pipeline(make_grid(saddle.domain, 2), saddle.box_image, 5)
    b = adaptive_morse_pipeline(make_grid(saddle.domain, 2), saddle.box_image, 5, threads=3)
    assert a.grid == b.grid and a.map == b.map and a.retraction == b.retraction
