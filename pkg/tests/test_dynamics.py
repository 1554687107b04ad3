import json

import numpy as np
import pytest

from morsedyn.dynamics import MultivaluedMap, build_outer_map, validate_outer, validate_pairs
from morsedyn.errors import ValidationError
from morsedyn.grid import Box, make_grid
from morsedyn.systems import contraction, double_well, saddle

UNIT = Box((0.0,), (1.0,))


def half_image(cell):
    return Box(tuple(v / 2 for v in cell.lower), tuple(v / 2 for v in cell.upper))


def test_half_map_example():
    g = make_grid(UNIT, 2)
    fmap = build_outer_map(g, half_image)
    # hand-computed: [0,.25) -> [0,.125]; [.25,.5) -> [.125,.25] touching cell 1 at .25
    assert fmap.adjacency[0] == (0,)
    assert fmap.adjacency[1] == (0, 1)
    assert fmap.adjacency[2] == (0, 1)  # [.25,.375] touches cell 0 at .25
    assert fmap.adjacency[3] == (1, 2)
    assert not any(fmap.clipped)


def test_constant_map():
    g = make_grid(UNIT, 3)
    fmap = build_outer_map(g, lambda cell: Box((0.3,), (0.3,)))
    assert all(a == (2,) for a in fmap.adjacency)
    face = build_outer_map(g, lambda cell: Box((0.25,), (0.25,)))
    assert all(a == (1, 2) for a in face.adjacency)


def test_identity_map_neighbours():
    g = make_grid(Box((0.0, 0.0), (1.0, 1.0)), 2)
    fmap = build_outer_map(g, lambda cell: cell)
    lo, hi = g.bounds_arrays()
    for i, targets in enumerate(fmap.adjacency):
        assert i in targets
        expect = np.flatnonzero(np.all((lo <= hi[i]) & (hi >= lo[i]), axis=1)).tolist()
        assert list(targets) == expect
    # interior cell has 8 neighbours plus itself
    assert max(len(t) for t in fmap.adjacency) == 9


def test_inverted_image_rejected():
    g = make_grid(UNIT, 1)
    with pytest.raises(ValidationError):
        build_outer_map(g, lambda cell: ((0.6,), (0.4,)))


def test_clipping_flags():
    g = make_grid(UNIT, 2)
    fmap = build_outer_map(g, lambda cell: Box((cell.lower[0] + 0.5,), (cell.upper[0] + 0.5,)))
    assert fmap.clipped == (False, False, True, True)
    assert fmap.adjacency[3] == ()


def test_map_invariants_and_json():
    g = make_grid(double_well.domain, 5)
    fmap = build_outer_map(g, double_well.box_image)
    for targets in fmap.adjacency:
        assert list(targets) == sorted(set(targets))
    data = json.loads(json.dumps(fmap.to_dict()))
    assert data["edges"] == sorted(data["edges"])
    assert MultivaluedMap.from_dict(data, g) == fmap
    assert fmap.edges_csv().splitlines()[0] == "src,dst"
    assert fmap.edge_count <= len(g) ** 2


def test_threads_do_not_change_result():
    g = make_grid(saddle.domain, 4)
    assert build_outer_map(g, saddle.box_image, threads=4) == build_outer_map(g, saddle.box_image)


@pytest.mark.parametrize("system", [contraction, double_well, saddle], ids=lambda s: s.name)
def test_exact_images_have_no_violations(system):
    g = make_grid(system.domain, 6 if system.domain.dim == 1 else 4)
    fmap = build_outer_map(g, system.box_image)
    rep = validate_outer(fmap, g, system.point_map, 100)
    assert rep.violations == 0
    assert rep.unflagged_out_of_domain == 0
    assert np.all(rep.cell_coverage == 1.0)


def test_forced_violation_reported_for_one_cell():
    g = make_grid(contraction.domain, 4)
    fmap = build_outer_map(g, contraction.box_image)
    adj = list(fmap.adjacency)
    adj[5] = ()
    broken = MultivaluedMap(fmap.cells, tuple(adj), fmap.clipped)
    rep = validate_outer(broken, g, contraction.point_map, 30)
    assert rep.violations == 30
    assert rep.violating_cells == [5]
    assert rep.cell_coverage[5] == 0.0


def test_refinement_keeps_coverage():
    g = make_grid(double_well.domain, 3)
    coarse = build_outer_map(g, double_well.box_image)
    g2 = g.refine(g.leaves()[::2])
    fine = build_outer_map(g2, double_well.box_image)
    for fmap, grid in ((coarse, g), (fine, g2)):
        assert validate_outer(fmap, grid, double_well.point_map, 100).violations == 0


def test_contraction_out_degree_bounded():
    g = make_grid(Box((-1.0, -1.0), (1.0, 1.0)), 4)
    fmap = build_outer_map(
        g, lambda c: Box(tuple(v / 2 for v in c.lower), tuple(v / 2 for v in c.upper))
    )
    assert np.mean([len(t) for t in fmap.adjacency]) <= 3**2


def test_validate_pairs():
    g = make_grid(contraction.domain, 5)
    fmap = build_outer_map(g, contraction.box_image)
    x = np.linspace(-0.99, 0.99, 50)[:, None]
    assert validate_pairs(fmap, g, x, x / 2).violations == 0
    assert validate_pairs(fmap, g, x, -x).violations > 0
