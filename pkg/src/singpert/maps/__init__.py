"""Planar near-triangulations, pattern occurrences and pattern-marked equations."""
from .rooted import InvalidMap, RootedMap, triangle
from .enumerate import Catalog, brute_force_near_triangulations, enumerate_near_triangulations
from .patterns import (count_embeddings, count_pattern_occurrences, occurrence_distribution, occurrences,
                       rotational_symmetries, self_intersections, wheel, from_graph)

__all__ = ["InvalidMap", "RootedMap", "triangle", "Catalog", "brute_force_near_triangulations",
           "enumerate_near_triangulations", "count_embeddings", "count_pattern_occurrences",
           "occurrence_distribution", "occurrences", "rotational_symmetries", "self_intersections", "wheel",
           "from_graph"]
