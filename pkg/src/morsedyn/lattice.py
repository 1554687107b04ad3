"""Lattice generated by forward-invariant regions, and its join-irreducibles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import networkx as nx

from morsedyn.morse import MorseGraph

__all__ = [
    "RegionLattice",
    "region_lattice",
    "join_irreducibles",
    "JoinIrreducibles",
    "birkhoff_isomorphic",
]


@dataclass(frozen=True)
class RegionLattice:
    """Cell sets closed under union and intersection, ordered by inclusion.

    Elements are sorted by size, then by their sorted cell tuples.
    """

    elements: tuple[frozenset[int], ...]
    generators: tuple[frozenset[int], ...]

    def __len__(self) -> int:
        return len(self.elements)

    def index(self, region: Iterable[int]) -> int:
        return self.elements.index(frozenset(region))

    def lower_covers(self, k: int) -> list[int]:
        """Immediate predecessors of element ``k`` under inclusion."""
        e = self.elements[k]
        below = [j for j, f in enumerate(self.elements) if f < e]
        return [j for j in below if not any(self.elements[j] < self.elements[i] for i in below)]


def _canonical(sets: Iterable[frozenset[int]]) -> tuple[frozenset[int], ...]:
    return tuple(sorted(set(sets), key=lambda s: (len(s), sorted(s))))


def region_lattice(regions: Iterable[Iterable[int]]) -> RegionLattice:
    """Smallest family containing the regions and the empty set, closed under
    pairwise union and intersection."""
    gens = tuple(frozenset(r) for r in regions)
    elements = {frozenset()} | set(gens)
    frontier = set(elements)
    while frontier:
        new = set()
        for a in frontier:
            for b in elements:
                for c in (a | b, a & b):
                    if c not in elements:
                        new.add(c)
        elements |= new
        frontier = new
    return RegionLattice(_canonical(elements), gens)


@dataclass(frozen=True)
class JoinIrreducibles:
    """Join-irreducible lattice elements with the inclusion order.

    ``below[i]`` lists the join-irreducibles strictly contained in element i.
    """

    elements: tuple[frozenset[int], ...]
    below: tuple[frozenset[int], ...]

    def __len__(self) -> int:
        return len(self.elements)


def join_irreducibles(lat: RegionLattice) -> JoinIrreducibles:
    picked = [k for k in range(len(lat)) if len(lat.lower_covers(k)) == 1]
    elems = tuple(lat.elements[k] for k in picked)
    below = tuple(
        frozenset(j for j, f in enumerate(elems) if f < e) for e in elems
    )
    return JoinIrreducibles(elems, below)


def _poset_digraph(below: Iterable[frozenset[int]]) -> nx.DiGraph:
    g = nx.DiGraph()
    below = list(below)
    g.add_nodes_from(range(len(below)))
    g.add_edges_from((q, p) for q, b in enumerate(below) for p in b)
    return g


def birkhoff_isomorphic(ji: JoinIrreducibles, mg: MorseGraph) -> bool:
    """Whether the join-irreducible poset and the Morse poset are order-isomorphic.

    Both strict orders are compared as comparability digraphs, which are
    transitively closed, so digraph isomorphism is order isomorphism.
    """
    if len(ji) != len(mg):
        return False
    return nx.is_isomorphic(_poset_digraph(ji.below), _poset_digraph(mg.below))
