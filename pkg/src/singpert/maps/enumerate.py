"""Exhaustive generation of chordless near-triangulations.

Two independent generators:

* :func:`enumerate_near_triangulations` builds maps from smaller ones by the
  root-edge decomposition (bare triangle, or a fan of pieces glued around a
  vertex followed by the insertion of a new root edge), as explicit dart
  surgery.  Every output is re-validated structurally and deduplicated by
  its canonical code.
* :func:`brute_force_near_triangulations` knows nothing about the
  decomposition: it tries every edge set on a labelled boundary cycle plus
  interior vertices and keeps those that close up, after adding an apex
  vertex, to a maximal planar graph (checked with networkx).
"""
from __future__ import annotations

import itertools
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import networkx as nx

from .rooted import InvalidMap, RootedMap, triangle

__all__ = [
    "Catalog", "enumerate_near_triangulations", "brute_force_near_triangulations",
    "glue", "add_root_edge",
]


def _inverse(perm):
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return inv


def glue(P: RootedMap, p: int, Q: RootedMap, q: int) -> RootedMap:
    """Identify root-face dart ``p`` of ``P`` with root-face dart ``q`` of ``Q`` (opposite direction).

    The identified edge becomes interior; the root of ``P`` is kept.
    """
    nP = P.ndarts
    alpha = list(P.alpha) + [a + nP for a in Q.alpha]
    phi = list(P.phi) + [f + nP for f in Q.phi]
    q = q + nP
    if p == P.root:
        raise ValueError("cannot glue along the root dart")
    inv = _inverse(phi)
    p_prev, p_next = inv[p], phi[p]
    q_prev, q_next = inv[q], phi[q]
    ap, aq = alpha[p], alpha[q]
    alpha[ap], alpha[aq] = aq, ap
    phi[p_prev] = q_next
    phi[q_prev] = p_next
    keep = [d for d in range(len(alpha)) if d not in (p, q)]
    new = {d: i for i, d in enumerate(keep)}
    return RootedMap(tuple(new[alpha[d]] for d in keep), tuple(new[phi[d]] for d in keep), new[P.root])


def add_root_edge(M: RootedMap) -> RootedMap:
    """Close the triangle at the apex ``c`` of the root ``a -> c``: new root ``a -> b``."""
    n = M.ndarts
    phi = list(M.phi)
    alpha = list(M.alpha)
    inv = _inverse(phi)
    t = M.root
    s_prev = phi[t]
    s = phi[s_prev]
    t_prev = inv[t]
    x, y = n, n + 1
    alpha += [y, x]
    phi += [0, 0]
    phi[t_prev] = x
    phi[x] = s
    phi[s_prev] = y
    phi[y] = t
    return RootedMap(tuple(alpha), tuple(phi), x)


@dataclass
class Catalog:
    """Maps grouped by weight ``(j, n)`` = (valency - 3, interior vertices)."""
    max_interior_edges: int
    maps: dict = field(default_factory=lambda: defaultdict(list))
    duplicates: int = 0

    def add(self, m: RootedMap):
        self.maps[m.weight()].append(m)

    def counts(self) -> dict:
        return {w: len(v) for w, v in sorted(self.maps.items())}

    def all_maps(self):
        for w in sorted(self.maps):
            yield from self.maps[w]

    def __len__(self):
        return sum(len(v) for v in self.maps.values())


def enumerate_near_triangulations(max_interior_edges: int, validate: bool = True) -> Catalog:
    if max_interior_edges > 12:
        raise ValueError("exhaustive generation is limited to 12 interior edges")
    I = max_interior_edges
    by_i: dict[int, list] = defaultdict(list)
    fans: dict[int, list] = defaultdict(list)   # glued sequences, keyed by interior edges
    seen = set()
    cat = Catalog(I)

    def emit(m):
        if validate:
            m.validate_near_triangulation()
        key = m.canonical
        if key in seen:
            cat.duplicates += 1
            return
        seen.add(key)
        by_i[m.interior_edges].append(m)
        cat.add(m)

    emit(triangle())
    for i in range(0, I + 1):
        # a fan with i interior edges: one piece, or a shorter fan glued to a piece
        fans[i].extend(by_i[i])
        for a in range(0, i):
            b = i - a - 1
            for F in fans[a]:
                for P in by_i[b]:
                    fans[i].append(glue(F, F.phi[F.root], P, P.root))
        if i + 2 <= I:
            for F in fans[i]:
                if F.root_valency >= 4:
                    emit(add_root_edge(F))
    return cat


def _labelled_near_triangulations(v: int, m: int):
    """Edge sets on boundary ``0..v-1`` and interior ``v..v+m-1`` forming a chordless near-triangulation."""
    boundary = [(i, (i + 1) % v) for i in range(v)]
    inner = list(range(v, v + m))
    cand = [(a, b) for a, b in itertools.combinations(range(v + m), 2) if a >= v or b >= v]
    need = 3 * m + v - 3
    apex = v + m
    for chosen in itertools.combinations(cand, need):
        deg = Counter()
        for a, b in chosen:
            deg[a] += 1
            deg[b] += 1
        if any(deg[w] < 3 for w in inner):
            continue
        H = nx.Graph()
        H.add_edges_from(boundary)
        H.add_edges_from(chosen)
        H.add_edges_from((apex, i) for i in range(v))
        if H.number_of_edges() != 3 * H.number_of_nodes() - 6:
            continue
        ok, emb = nx.check_planarity(H)
        if not ok:
            continue
        yield emb


def _rooted_from_embedding(emb, v: int, apex: int) -> RootedMap:
    for reverse in (False, True):
        rot = {}
        for w in emb.nodes:
            if w == apex:
                continue
            order = [x for x in emb.neighbors_cw_order(w) if x != apex]
            rot[w] = order[::-1] if reverse else order
        m = RootedMap.from_rotation(rot, (0, 1))
        labels = _vertex_labels(m, rot)
        if [labels[m.tail(d)] for d in m.root_face] == list(range(v)):
            return m
    raise InvalidMap("embedding does not have the labelled boundary as a face")


def _vertex_labels(m: RootedMap, rot: dict) -> dict:
    index = {}
    for w, nb in rot.items():
        for x in nb:
            index[(w, x)] = len(index)
    labels = {}
    for (w, _), d in index.items():
        labels[m.vertex_of[d]] = w
    return labels


def brute_force_near_triangulations(max_interior_edges: int) -> Catalog:
    """Independent oracle: labelled edge sets, rooted maps counted as labelled / m!."""
    if max_interior_edges > 12:
        raise ValueError("exhaustive generation is limited to 12 interior edges")
    cat = Catalog(max_interior_edges)
    for m_int in range(0, max_interior_edges // 3 + 1):
        for v in range(3, max_interior_edges - 3 * m_int + 4):
            if 3 * m_int + v - 3 > max_interior_edges:
                continue
            labelled = 0
            found = {}
            for emb in _labelled_near_triangulations(v, m_int):
                labelled += 1
                rm = _rooted_from_embedding(emb, v, v + m_int)
                rm.validate_near_triangulation()
                found.setdefault(rm.canonical, rm)
            if labelled != len(found) * math.factorial(m_int):
                raise InvalidMap(f"labelled count {labelled} is not {math.factorial(m_int)} x {len(found)} at v={v}, m={m_int}")
            for rm in found.values():
                cat.add(rm)
    return cat
