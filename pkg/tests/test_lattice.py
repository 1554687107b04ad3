import itertools

import pytest

from morsedyn.grid import make_grid
from morsedyn.lattice import birkhoff_isomorphic, join_irreducibles, region_lattice
from morsedyn.morse import condensation, morse_graph, order_retraction, reachable_region
from morsedyn.pipeline import adaptive_morse_pipeline
from morsedyn.systems import double_well, saddle


def brute_closure(gens):
    fam = {frozenset()} | {frozenset(g) for g in gens}
    while True:
        nxt = fam | {a | b for a in fam for b in fam} | {a & b for a in fam for b in fam}
        if nxt == fam:
            return fam
        fam = nxt


def test_single_generator():
    lat = region_lattice([{1, 2}])
    assert set(lat.elements) == {frozenset(), frozenset({1, 2})}
    assert join_irreducibles(lat).elements == (frozenset({1, 2}),)


def test_chain():
    lat = region_lattice([{1}, {1, 2}])
    assert len(lat) == 3
    ji = join_irreducibles(lat)
    assert ji.elements == (frozenset({1}), frozenset({1, 2}))
    assert ji.below == (frozenset(), frozenset({0}))


def test_closure_matches_brute_force():
    gens = [{1, 2}, {2, 3}, {3, 4, 5}, {1, 5}]
    lat = region_lattice(gens)
    assert set(lat.elements) == brute_closure(gens)
    for a, b in itertools.product(lat.elements, repeat=2):
        assert a | b in lat.elements and a & b in lat.elements


def test_boolean_lattice_join_irreducibles_are_atoms():
    lat = region_lattice([{1}, {2}, {3}])
    assert len(lat) == 8
    assert set(join_irreducibles(lat).elements) == {frozenset({1}), frozenset({2}), frozenset({3})}


@pytest.mark.parametrize("system, depth", [(double_well, 8), (double_well, 3), (saddle, 5)])
def test_birkhoff_on_runs(system, depth):
    res = adaptive_morse_pipeline(make_grid(system.domain, 2), system.box_image, depth)
    mg = res.morse_graph
    assert res.retraction is not None
    regions = [reachable_region(res.map, mg, k) for k in range(len(mg))]
    lat = region_lattice(regions)
    assert set(lat.elements) == brute_closure(regions)
    ji = join_irreducibles(lat)
    assert len(ji) == len(mg)
    assert birkhoff_isomorphic(ji, mg)
    # the explicit correspondence node -> A(node) is order-preserving both ways
    for p, q in itertools.product(range(len(mg)), repeat=2):
        assert mg.leq(p, q) == (regions[p] <= regions[q])


def test_birkhoff_detects_mismatch():
    adj = [[0], [1], [0, 1, 2]]
    c = condensation(adj)
    mg = morse_graph(c)
    lat = region_lattice([{0}, {1}])
    assert not birkhoff_isomorphic(join_irreducibles(lat), mg)
