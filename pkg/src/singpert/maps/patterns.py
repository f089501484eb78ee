"""Pattern occurrences of near-triangulations inside rooted maps."""
from __future__ import annotations

from collections import Counter

from .rooted import RootedMap

__all__ = [
    "embeddings", "count_embeddings", "count_pattern_occurrences", "occurrences", "rotational_symmetries",
    "self_intersections", "wheel", "from_graph", "occurrence_distribution",
]


def _extend(p: RootedMap, m: RootedMap, start_p: int, start_m: int, p_inner: set, m_outer: set):
    """Propagate ``start_p -> start_m`` over the inner faces of ``p``; ``None`` on conflict."""
    f = {start_p: start_m}
    stack = [start_p]
    while stack:
        d = stack.pop()
        e = f[d]
        if e in m_outer:
            return None
        nd, ne = p.phi[d], m.phi[e]
        pairs = [(nd, ne)]
        ad = p.alpha[d]
        if ad in p_inner:
            pairs.append((ad, m.alpha[e]))
        for a, b in pairs:
            if a in f:
                if f[a] != b:
                    return None
            else:
                f[a] = b
                stack.append(a)
    if len(set(f.values())) != len(f):
        return None
    vmap = {}
    for d, e in f.items():
        pv, mv = p.vertex_of[d], m.vertex_of[e]
        if vmap.setdefault(pv, mv) != mv:
            return None
    if len(set(vmap.values())) != len(vmap):
        return None
    return f


def embeddings(p: RootedMap, m: RootedMap) -> list[dict]:
    """All maps of the inner-face darts of ``p`` into inner-face darts of ``m`` respecting faces and edges.

    Vertices must map injectively.  Each embedding is determined by the image
    of the inner dart of the root edge of ``p``.
    """
    p_outer = set(p.root_face)
    p_inner = set(range(p.ndarts)) - p_outer
    m_outer = set(m.root_face)
    start = p.alpha[p.root]
    out = []
    if p.ndarts - len(p_outer) > m.ndarts - len(m_outer):
        return out
    for e in range(m.ndarts):
        if e in m_outer:
            continue
        f = _extend(p, m, start, e, p_inner, m_outer)
        if f is not None:
            out.append(f)
    return out


def count_embeddings(p: RootedMap, m: RootedMap) -> int:
    return len(embeddings(p, m))


def rotational_symmetries(p: RootedMap) -> int:
    """Number of orientation-preserving automorphisms of ``p`` fixing its root face."""
    return count_embeddings(p, p)


def occurrences(p: RootedMap, m: RootedMap) -> list[frozenset]:
    """Distinct occurrences, each given by the set of inner faces of ``m`` it covers."""
    seen = set()
    for f in embeddings(p, m):
        faces = frozenset(m.face_of[e] for e in f.values())
        seen.add(faces)
    return sorted(seen, key=sorted)


def count_pattern_occurrences(p: RootedMap, m: RootedMap, convention: str = "per_symmetry") -> int:
    """Occurrences of ``p`` in ``m``.

    ``per_symmetry``: embeddings divided by the rotational symmetries of ``p``
    (embeddings related by an automorphism of ``p`` are one occurrence);
    ``raw``: the embedding count itself.
    """
    k = count_embeddings(p, m)
    if convention == "raw":
        return k
    r = rotational_symmetries(p)
    if k % r:
        raise ArithmeticError("embedding count is not a multiple of the symmetry count")
    return k // r


def self_intersections(p: RootedMap, m: RootedMap) -> list[tuple[frozenset, frozenset]]:
    """Pairs of distinct occurrences sharing an inner face."""
    occ = occurrences(p, m)
    bad = []
    for i in range(len(occ)):
        for j in range(i + 1, len(occ)):
            if occ[i] & occ[j]:
                bad.append((occ[i], occ[j]))
    return bad


def occurrence_distribution(p: RootedMap, maps, convention: str = "per_symmetry") -> dict:
    """``{(j, n): Counter(k -> number of maps with k occurrences)}``."""
    out: dict = {}
    for m in maps:
        k = count_pattern_occurrences(p, m, convention)
        out.setdefault(m.weight(), Counter())[k] += 1
    return out


def wheel(k: int) -> RootedMap:
    """Boundary ``k``-gon with one interior vertex joined to every boundary vertex."""
    if k < 3:
        raise ValueError("wheel needs at least 3 spokes")
    return from_graph(k, [(i, k) for i in range(k)])


def from_graph(v: int, inner_edges) -> RootedMap:
    """Near-triangulation on boundary cycle ``0..v-1`` (in order) plus the given non-boundary edges."""
    import networkx as nx

    from .enumerate import _rooted_from_embedding

    H = nx.Graph()
    H.add_edges_from((i, (i + 1) % v) for i in range(v))
    H.add_edges_from(inner_edges)
    apex = max(H.nodes) + 1
    H.add_edges_from((apex, i) for i in range(v))
    ok, emb = nx.check_planarity(H)
    if not ok or H.number_of_edges() != 3 * H.number_of_nodes() - 6:
        raise ValueError("edges do not form a near-triangulation with this boundary")
    m = _rooted_from_embedding(emb, v, apex)
    m.validate_near_triangulation()
    return m
