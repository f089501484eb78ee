"""Rooted planar maps as half-edge (dart) structures.

A map on darts ``0..2E-1`` is stored by its edge involution ``alpha`` and its
face permutation ``phi`` (``phi[d]`` is the dart following ``d`` along its
face).  The vertex rotation is ``sigma = phi o alpha``; the origin of ``d``
is its ``sigma``-orbit and ``d`` ends where ``alpha[d]`` starts.  The root
face is the ``phi``-orbit of the root dart.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

__all__ = ["RootedMap", "InvalidMap", "triangle"]


class InvalidMap(ValueError):
    pass


def _orbits(perm: list[int]) -> list[list[int]]:
    seen = [False] * len(perm)
    out = []
    for d in range(len(perm)):
        if seen[d]:
            continue
        orb = []
        e = d
        while not seen[e]:
            seen[e] = True
            orb.append(e)
            e = perm[e]
        out.append(orb)
    return out


@dataclass(frozen=True, eq=False)
class RootedMap:
    alpha: tuple
    phi: tuple
    root: int

    # -- derived structure ---------------------------------------------------
    @property
    def ndarts(self) -> int:
        return len(self.alpha)

    @cached_property
    def sigma(self) -> tuple:
        return tuple(self.phi[self.alpha[d]] for d in range(self.ndarts))

    @cached_property
    def vertex_of(self) -> tuple:
        lab = [0] * self.ndarts
        for i, orb in enumerate(_orbits(list(self.sigma))):
            for d in orb:
                lab[d] = i
        return tuple(lab)

    @cached_property
    def face_of(self) -> tuple:
        lab = [0] * self.ndarts
        for i, orb in enumerate(_orbits(list(self.phi))):
            for d in orb:
                lab[d] = i
        return tuple(lab)

    @property
    def n_vertices(self) -> int:
        return max(self.vertex_of) + 1 if self.ndarts else 0

    @property
    def n_edges(self) -> int:
        return self.ndarts // 2

    @property
    def n_faces(self) -> int:
        return max(self.face_of) + 1 if self.ndarts else 0

    def head(self, d: int) -> int:
        return self.vertex_of[self.alpha[d]]

    def tail(self, d: int) -> int:
        return self.vertex_of[d]

    def face_darts(self, d: int) -> list[int]:
        out = [d]
        e = self.phi[d]
        while e != d:
            out.append(e)
            e = self.phi[e]
        return out

    @cached_property
    def root_face(self) -> tuple:
        return tuple(self.face_darts(self.root))

    @property
    def root_valency(self) -> int:
        return len(self.root_face)

    @cached_property
    def boundary_vertices(self) -> frozenset:
        return frozenset(self.tail(d) for d in self.root_face)

    @property
    def interior_edges(self) -> int:
        return self.n_edges - self.root_valency

    @property
    def interior_vertices(self) -> int:
        return self.n_vertices - len(self.boundary_vertices)

    def weight(self) -> tuple[int, int]:
        """``(j, n)``: root valency minus 3 and (interior edges - valency + 3)/3."""
        return self.root_valency - 3, (self.interior_edges - self.root_valency + 3) // 3

    def edges(self) -> list[tuple[int, int]]:
        return [(self.tail(d), self.head(d)) for d in range(self.ndarts) if d < self.alpha[d]]

    # -- validation ---------------------------------------------------------------
    def check_permutations(self):
        n = self.ndarts
        if sorted(self.alpha) != list(range(n)) or sorted(self.phi) != list(range(n)):
            raise InvalidMap("alpha and phi must be permutations")
        for d in range(n):
            if self.alpha[d] == d or self.alpha[self.alpha[d]] != d:
                raise InvalidMap("alpha must be a fixed-point-free involution")
        if not 0 <= self.root < n:
            raise InvalidMap("root dart out of range")
        # connectivity under alpha and phi
        seen = {self.root}
        stack = [self.root]
        while stack:
            d = stack.pop()
            for e in (self.alpha[d], self.phi[d]):
                if e not in seen:
                    seen.add(e)
                    stack.append(e)
        if len(seen) != n:
            raise InvalidMap("map is not connected")

    def is_planar(self) -> bool:
        return self.n_vertices - self.n_edges + self.n_faces == 2

    def is_simple(self) -> bool:
        pairs = set()
        for a, b in self.edges():
            if a == b:
                return False
            key = (min(a, b), max(a, b))
            if key in pairs:
                return False
            pairs.add(key)
        return True

    def chords(self) -> list[tuple[int, int]]:
        """Edges not on the root face whose endpoints both lie on it."""
        rf = set(self.root_face)
        bv = self.boundary_vertices
        return [(self.tail(d), self.head(d)) for d in range(self.ndarts)
                if d < self.alpha[d] and d not in rf and self.alpha[d] not in rf
                and self.tail(d) in bv and self.head(d) in bv]

    def validate_near_triangulation(self):
        """Raise :class:`InvalidMap` unless this is a chordless simple near-triangulation."""
        self.check_permutations()
        if not self.is_planar():
            raise InvalidMap("Euler characteristic is not 2")
        if not self.is_simple():
            raise InvalidMap("map has loops or multiple edges")
        rf = self.root_face
        if len(rf) < 3:
            raise InvalidMap("root face valency below 3")
        if len({self.tail(d) for d in rf}) != len(rf):
            raise InvalidMap("root face boundary is not a simple cycle")
        for orb in _orbits(list(self.phi)):
            if self.root in orb:
                continue
            if len(orb) != 3:
                raise InvalidMap(f"inner face of degree {len(orb)}")
        if self.chords():
            raise InvalidMap("interior chord between boundary vertices")
        if (self.interior_edges - self.root_valency) % 3:
            raise InvalidMap("edge count is inconsistent with a near-triangulation")
        return True

    # -- canonical form -------------------------------------------------------------
    @cached_property
    def canonical(self) -> tuple:
        """Relabelling invariant code: darts numbered in breadth-first order from the root."""
        lab = {self.root: 0}
        order = [self.root]
        i = 0
        while i < len(order):
            d = order[i]
            for e in (self.alpha[d], self.phi[d]):
                if e not in lab:
                    lab[e] = len(order)
                    order.append(e)
            i += 1
        return tuple((lab[self.alpha[d]], lab[self.phi[d]]) for d in order)

    def __eq__(self, other):
        return isinstance(other, RootedMap) and self.canonical == other.canonical

    def __hash__(self):
        return hash(self.canonical)

    def relabel(self) -> "RootedMap":
        code = self.canonical
        return RootedMap(tuple(a for a, _ in code), tuple(p for _, p in code), 0)

    # -- exchange format ----------------------------------------------------------------
    def to_json(self) -> dict:
        return {"darts": self.ndarts, "alpha": list(self.alpha), "sigma": list(self.sigma), "root": self.root}

    @classmethod
    def from_json(cls, doc) -> "RootedMap":
        if isinstance(doc, str):
            doc = json.loads(doc)
        alpha = [int(a) for a in doc["alpha"]]
        sigma = [int(s) for s in doc["sigma"]]
        if len(alpha) != len(sigma) or ("darts" in doc and int(doc["darts"]) != len(alpha)):
            raise InvalidMap("inconsistent dart count")
        # phi = sigma o alpha
        phi = tuple(sigma[alpha[d]] for d in range(len(alpha)))
        m = cls(tuple(alpha), phi, int(doc["root"]))
        m.check_permutations()
        return m

    @classmethod
    def from_rotation(cls, rotation: dict, root: tuple) -> "RootedMap":
        """Build from ``rotation[v] = [neighbours in cyclic order]`` and a root ``(a, b)``.

        The face to the left of ``a -> b`` (following ``phi[d] = sigma(alpha(d))``
        with ``sigma`` the given cyclic order) becomes the root face.
        """
        index = {}
        for v, nb in rotation.items():
            for w in nb:
                index[(v, w)] = len(index)
        n = len(index)
        alpha = [0] * n
        sigma = [0] * n
        for (v, w), d in index.items():
            alpha[d] = index[(w, v)]
            nb = rotation[v]
            sigma[d] = index[(v, nb[(nb.index(w) + 1) % len(nb)])]
        phi = tuple(sigma[alpha[d]] for d in range(n))
        return cls(tuple(alpha), phi, index[root])

    def __repr__(self):
        return f"RootedMap(darts={self.ndarts}, valency={self.root_valency}, interior_edges={self.interior_edges})"


def triangle() -> RootedMap:
    # darts 0,1,2 run around the outer face; 3,4,5 are their partners in the inner face
    alpha = (3, 4, 5, 0, 1, 2)
    phi = (1, 2, 0, 5, 3, 4)
    return RootedMap(alpha, phi, 0)
