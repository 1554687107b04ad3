"""Recurrence, condensation and Morse graphs of a multivalued map.

Order convention: for components ``p`` and ``q``, ``p <= q`` iff ``q`` reaches
``p``.  Minimal Morse nodes are therefore the attractor-like sinks.

Components are listed in canonical order (by smallest contained cell) and
Morse node ``k`` is the k-th recurrent component in that order.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

from morsedyn.dynamics import MultivaluedMap

__all__ = [
    "strongly_connected_components",
    "Condensation",
    "condensation",
    "MorseGraph",
    "morse_graph",
    "Retraction",
    "order_retraction",
    "BasinLabels",
    "basins",
    "reachable_region",
]

log = logging.getLogger(__name__)

Adjacency = Sequence[Sequence[int]]


def _adjacency(graph) -> Adjacency:
    return graph.adjacency if isinstance(graph, MultivaluedMap) else graph


def _tarjan(adj: Adjacency) -> list[list[int]]:
    """Iterative Tarjan.  Components come out sinks-first (reverse topological)."""
    n = len(adj)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    out: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] >= 0:
            continue
        work = [(root, 0)]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, i = work[-1]
            succ = adj[v]
            if i < len(succ):
                work[-1] = (v, i + 1)
                w = succ[i]
                if index[w] < 0:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, 0))
                elif on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                if low[v] < low[parent]:
                    low[parent] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(sorted(comp))
    return out


def strongly_connected_components(graph) -> list[list[int]]:
    """Strongly connected components, each sorted, ordered by smallest vertex.

    ``graph`` is a :class:`MultivaluedMap` or a plain adjacency list.
    """
    return sorted(_tarjan(_adjacency(graph)), key=lambda c: c[0])


@dataclass(frozen=True)
class Condensation:
    components: tuple[tuple[int, ...], ...]
    comp_of: tuple[int, ...]
    successors: tuple[tuple[int, ...], ...]
    recurrent: tuple[bool, ...]
    topo_order: tuple[int, ...]  # sources first

    def __len__(self) -> int:
        return len(self.components)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, s in enumerate(self.successors) for v in s]

    @cached_property
    def predecessors(self) -> tuple[tuple[int, ...], ...]:
        pred: list[list[int]] = [[] for _ in self.components]
        for u, v in self.edges():
            pred[v].append(u)
        return tuple(tuple(p) for p in pred)

    @cached_property
    def descendants(self) -> tuple[int, ...]:
        """Bitset per component of everything it reaches, itself included."""
        reach = [0] * len(self)
        for u in reversed(self.topo_order):
            r = 1 << u
            for v in self.successors[u]:
                r |= reach[v]
            reach[u] = r
        return tuple(reach)

    def reaches(self, u: int, v: int) -> bool:
        return bool(self.descendants[u] >> v & 1)


def condensation(fmap) -> Condensation:
    """Collapse strongly connected components; flag those containing an edge."""
    adj = _adjacency(fmap)
    raw = _tarjan(adj)  # sinks first
    comps = sorted(raw, key=lambda c: c[0])
    cid = {c[0]: k for k, c in enumerate(comps)}
    comp_of = [0] * len(adj)
    for k, c in enumerate(comps):
        for v in c:
            comp_of[v] = k
    succ: list[set[int]] = [set() for _ in comps]
    recurrent = [False] * len(comps)
    for v, targets in enumerate(adj):
        cv = comp_of[v]
        for w in targets:
            cw = comp_of[w]
            if cw == cv:
                recurrent[cv] = True
            else:
                succ[cv].add(cw)
    topo = tuple(cid[c[0]] for c in reversed(raw))
    return Condensation(
        components=tuple(tuple(c) for c in comps),
        comp_of=tuple(comp_of),
        successors=tuple(tuple(sorted(s)) for s in succ),
        recurrent=tuple(recurrent),
        topo_order=topo,
    )


@dataclass(frozen=True)
class MorseGraph:
    """Poset of recurrent components.  ``below[q]`` holds every node ``p < q``."""

    components: tuple[int, ...]
    cells: tuple[tuple[int, ...], ...]
    below: tuple[frozenset[int], ...]

    def __len__(self) -> int:
        return len(self.components)

    @property
    def minimal(self) -> tuple[bool, ...]:
        return tuple(not b for b in self.below)

    def leq(self, p: int, q: int) -> bool:
        return p == q or p in self.below[q]

    def node_of_component(self, comp: int) -> int | None:
        try:
            return self.components.index(comp)
        except ValueError:
            return None

    def order_pairs(self) -> list[tuple[int, int]]:
        """All strict relations as ``(q, p)`` with ``p < q``."""
        return [(q, p) for q in range(len(self)) for p in sorted(self.below[q])]

    def covering_edges(self) -> list[tuple[int, int]]:
        """Hasse diagram edges ``(q, p)``: ``p < q`` with nothing in between."""
        out = []
        for q in range(len(self)):
            for p in sorted(self.below[q]):
                if not any(p in self.below[r] for r in self.below[q] if r != p):
                    out.append((q, p))
        return out

    def heights(self) -> tuple[int, ...]:
        """Length of the longest chain down to a minimal node."""
        h: dict[int, int] = {}

        def height(q: int) -> int:
            if q not in h:
                h[q] = 1 + max((height(p) for p in self.below[q]), default=-1)
            return h[q]

        return tuple(height(q) for q in range(len(self)))

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": k, "cells": list(self.cells[k]), "minimal": self.minimal[k]}
                for k in range(len(self))
            ],
            "order_edges": [list(e) for e in self.covering_edges()],
        }


def morse_graph(cond: Condensation) -> MorseGraph:
    nodes = tuple(k for k in range(len(cond)) if cond.recurrent[k])
    node_bit = {c: i for i, c in enumerate(nodes)}
    below = []
    for c in nodes:
        reach = cond.descendants[c] & ~(1 << c)
        below.append(frozenset(node_bit[d] for d in nodes if reach >> d & 1))
    return MorseGraph(
        components=nodes,
        cells=tuple(cond.components[c] for c in nodes),
        below=tuple(below),
    )


@dataclass(frozen=True)
class Retraction:
    """Morse node assigned to every condensation component."""

    assignment: tuple[int, ...]

    def to_dict(self) -> dict[str, int]:
        return {str(c): n for c, n in enumerate(self.assignment)}


def _least_upper_bound(mg: MorseGraph, items: set[int]) -> int | None:
    uppers = [m for m in range(len(mg)) if all(mg.leq(s, m) for s in items)]
    least = [m for m in uppers if all(mg.leq(m, u) for u in uppers)]
    return least[0] if len(least) == 1 else None


def is_retraction(cond: Condensation, mg: MorseGraph, assignment: Sequence[int]) -> bool:
    """Fixes Morse nodes and preserves order.

    Checking every condensation edge suffices: the condensation order is the
    transitive closure of its edges and the Morse order is transitive.
    """
    if len(assignment) != len(cond):
        return False
    for k, c in enumerate(mg.components):
        if assignment[c] != k:
            return False
    return all(mg.leq(assignment[v], assignment[u]) for u, v in cond.edges())


def _search(cond: Condensation, mg: MorseGraph, max_steps: int) -> list[int] | None:
    """Exact backtracking over candidate assignments, sinks first."""
    n_nodes = len(mg)
    node_of = {c: k for k, c in enumerate(mg.components)}
    lower = [0] * len(cond)  # Morse nodes reachable from v
    for v in reversed(cond.topo_order):
        b = 1 << node_of[v] if v in node_of else 0
        for u in cond.successors[v]:
            b |= lower[u]
        lower[v] = b
    upper = [0] * len(cond)  # Morse nodes reaching v
    for v in cond.topo_order:
        b = 1 << node_of[v] if v in node_of else 0
        for w in cond.predecessors[v]:
            b |= upper[w]
        upper[v] = b

    def bits(b: int) -> list[int]:
        return [m for m in range(n_nodes) if b >> m & 1]

    order = [v for v in reversed(cond.topo_order) if v not in node_of]
    domains = []
    for v in order:
        lo, hi = bits(lower[v]), bits(upper[v])
        dom = [
            m
            for m in range(n_nodes)
            if all(mg.leq(a, m) for a in lo) and all(mg.leq(m, b) for b in hi)
        ]
        if not dom:
            return None
        domains.append(dom)

    sigma = [-1] * len(cond)
    for c, k in node_of.items():
        sigma[c] = k
    preds = cond.predecessors
    steps = 0
    pos = [0] * len(order)
    depth = 0
    while 0 <= depth < len(order):
        v = order[depth]
        dom = domains[depth]
        placed = False
        while pos[depth] < len(dom):
            m = dom[pos[depth]]
            pos[depth] += 1
            steps += 1
            if steps > max_steps:
                log.warning("order retraction search exceeded %d steps; reporting absent", max_steps)
                return None
            if all(mg.leq(sigma[u], m) for u in cond.successors[v]) and all(
                sigma[w] < 0 or mg.leq(m, sigma[w]) for w in preds[v]
            ):
                sigma[v] = m
                placed = True
                break
        if placed:
            depth += 1
        else:
            sigma[v] = -1
            pos[depth] = 0
            depth -= 1
            if depth >= 0:
                sigma[order[depth]] = -1
    return sigma if depth == len(order) else None


def order_retraction(
    cond: Condensation, mg: MorseGraph, max_steps: int = 1_000_000
) -> Retraction | None:
    """Order-preserving map from the condensation onto the Morse graph, or ``None``.

    Sinks first, each non-recurrent component takes the least upper bound of
    its successors' values.  Whenever every such bound exists the result is
    the pointwise-least retraction.  If a bound is missing, an exact
    backtracking search decides instead.  Every returned value is verified.
    """
    if len(mg) == 0:
        return Retraction(()) if len(cond) == 0 else None
    node_of = {c: k for k, c in enumerate(mg.components)}
    sigma = [-1] * len(cond)
    greedy_ok = True
    for v in reversed(cond.topo_order):
        if v in node_of:
            sigma[v] = node_of[v]
            continue
        lub = _least_upper_bound(mg, {sigma[u] for u in cond.successors[v]})
        if lub is None:
            greedy_ok = False
            break
        sigma[v] = lub
    if not greedy_ok:
        found = _search(cond, mg, max_steps)
        if found is None:
            return None
        sigma = found
    if not is_retraction(cond, mg, sigma):
        return None
    return Retraction(tuple(sigma))


ROLES = ("morse", "basin", "separatrix")


@dataclass(frozen=True)
class BasinLabels:
    """Per-cell Morse node and role (``morse``, ``basin`` or ``separatrix``)."""

    node: tuple[int, ...]
    role: tuple[str, ...]

    def basin_of(self, node: int) -> list[int]:
        return [c for c, (n, r) in enumerate(zip(self.node, self.role)) if n == node and r == "basin"]

    def cells_with_role(self, role: str) -> list[int]:
        return [c for c, r in enumerate(self.role) if r == role]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "node", "role"])
        w.writerows((c, n, r) for c, (n, r) in enumerate(zip(self.node, self.role)))
        return buf.getvalue()


def basins(cond: Condensation, retraction: Retraction, mg: MorseGraph) -> BasinLabels:
    minimal = mg.minimal
    node, role = [], []
    for comp in cond.comp_of:
        k = retraction.assignment[comp]
        node.append(k)
        if cond.recurrent[comp]:
            role.append("morse")
        else:
            role.append("basin" if minimal[k] else "separatrix")
    return BasinLabels(tuple(node), tuple(role))


def reachable_region(fmap, mg: MorseGraph, node: int) -> frozenset[int]:
    """Forward-reachability closure of a Morse node's cells."""
    adj = _adjacency(fmap)
    seen = set(mg.cells[node])
    queue = deque(seen)
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return frozenset(seen)
